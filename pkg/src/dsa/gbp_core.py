"""Linear 2D Gaussian belief propagation with isotropic (scalar) precision.

Every message, belief and constraint is a :class:`GaussianCanonical`, i.e. an
information vector ``(eta_x, eta_y)`` and one precision ``lam`` shared by both
axes. Factors cache the last (damped) message they delivered to each endpoint,
so a variable-to-factor message is simply ``belief - last_sent``.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, NamedTuple, Sequence

import numpy as np

R_DAMP = 0.8
PRIOR_LAMBDA = 0.01

# FLOP accounting (see wire.ResourceCounters): 13 operations per
# measurement message pair, split 7 (first endpoint) + 6 (second endpoint).
FLOPS_PER_BELIEF_TERM = 3
FLOPS_MSG_TO_FIRST = 7
FLOPS_MSG_TO_SECOND = 6


class GaussianCanonical(NamedTuple):
    eta_x: float
    eta_y: float
    lam: float

    @property
    def eta(self) -> tuple[float, float]:
        return (self.eta_x, self.eta_y)

    def __add__(self, other):  # type: ignore[override]
        return canonical_sum(self, other)

    def __sub__(self, other):
        return canonical_sub(self, other)


class GaussianMoments(NamedTuple):
    mu_x: float
    mu_y: float
    sigma2: float

    @property
    def mu(self) -> tuple[float, float]:
        return (self.mu_x, self.mu_y)


ZERO = GaussianCanonical(0.0, 0.0, 0.0)


def to_canonical(g: GaussianMoments) -> GaussianCanonical:
    if not g.sigma2 > 0:
        raise ValueError(f"variance must be positive, got {g.sigma2}")
    lam = 1.0 / g.sigma2
    return GaussianCanonical(lam * g.mu_x, lam * g.mu_y, lam)


def to_moments(g: GaussianCanonical) -> GaussianMoments:
    if not g.lam > 0:
        raise ValueError("zero-information Gaussian has no moments form (infinite variance)")
    return GaussianMoments(g.eta_x / g.lam, g.eta_y / g.lam, 1.0 / g.lam)


def from_mean(mu: Sequence[float], lam: float) -> GaussianCanonical:
    """Canonical form of an isotropic Gaussian given its mean and precision."""
    return GaussianCanonical(lam * mu[0], lam * mu[1], lam)


def mean_of(g: GaussianCanonical) -> tuple[float, float]:
    return (g.eta_x / g.lam, g.eta_y / g.lam)


def canonical_sum(a: GaussianCanonical, b: GaussianCanonical) -> GaussianCanonical:
    return GaussianCanonical(a.eta_x + b.eta_x, a.eta_y + b.eta_y, a.lam + b.lam)


def canonical_sub(a: GaussianCanonical, b: GaussianCanonical) -> GaussianCanonical:
    """``a - b`` with the result clamped to zero information when the precision
    would be non-positive (rounding residue from the belief-subtraction rule)."""
    lam = a.lam - b.lam
    if lam <= 0.0:
        return ZERO
    return GaussianCanonical(a.eta_x - b.eta_x, a.eta_y - b.eta_y, lam)


def variable_to_factor_message(belief: GaussianCanonical,
                               last_sent_to_var: GaussianCanonical) -> GaussianCanonical:
    return canonical_sub(belief, last_sent_to_var)


def measurement_messages(z: GaussianCanonical,
                         msg_from_i: GaussianCanonical,
                         msg_from_j: GaussianCanonical):
    """Messages from a relative measurement factor ``x_j - x_i ~ z``.

    Returns ``(to_i, to_j)``. The message to the first endpoint carries
    ``-eta_f`` because ``x_i = x_j - z``.
    """
    return message_to_first(z, msg_from_j), message_to_second(z, msg_from_i)


def message_to_first(z: GaussianCanonical, msg_from_j: GaussianCanonical) -> GaussianCanonical:
    if not z.lam > 0:
        raise ValueError("measurement factor needs positive precision")
    lam_j = msg_from_j.lam
    if lam_j <= 0.0:
        return ZERO
    alpha = z.lam / (z.lam + lam_j)
    beta = 1.0 - alpha
    return GaussianCanonical(alpha * msg_from_j.eta_x - beta * z.eta_x,
                             alpha * msg_from_j.eta_y - beta * z.eta_y,
                             alpha * lam_j)


def message_to_second(z: GaussianCanonical, msg_from_i: GaussianCanonical) -> GaussianCanonical:
    if not z.lam > 0:
        raise ValueError("measurement factor needs positive precision")
    lam_i = msg_from_i.lam
    if lam_i <= 0.0:
        return ZERO
    alpha = z.lam / (z.lam + lam_i)
    beta = 1.0 - alpha
    return GaussianCanonical(alpha * msg_from_i.eta_x + beta * z.eta_x,
                             alpha * msg_from_i.eta_y + beta * z.eta_y,
                             alpha * lam_i)


def damp(new: GaussianCanonical, prev: GaussianCanonical, r_damp: float = R_DAMP) -> GaussianCanonical:
    if not 0.0 <= r_damp < 1.0:
        raise ValueError(f"r_damp must be in [0, 1), got {r_damp}")
    if r_damp == 0.0:
        return new
    keep = 1.0 - r_damp
    return GaussianCanonical(keep * new.eta_x + r_damp * prev.eta_x,
                             keep * new.eta_y + r_damp * prev.eta_y,
                             keep * new.lam + r_damp * prev.lam)


class VariableNode:
    __slots__ = ("key", "belief", "factors")

    def __init__(self, key, belief: GaussianCanonical = ZERO):
        self.key = key
        self.belief = belief
        # (factor, side) pairs; side indexes factor.last_sent
        self.factors: list[tuple[Factor, int]] = []

    def update_belief(self) -> GaussianCanonical:
        ex = ey = lam = 0.0
        for f, side in self.factors:
            m = f.last_sent[side]
            ex += m.eta_x
            ey += m.eta_y
            lam += m.lam
        self.belief = GaussianCanonical(ex, ey, lam)
        return self.belief

    def __repr__(self):
        return f"VariableNode({self.key!r}, {self.belief})"


def belief_update(var: VariableNode, msgs: Iterable[GaussianCanonical] | None = None) -> GaussianCanonical:
    """Set ``var.belief`` to the canonical sum of ``msgs`` (default: the cached
    messages of every attached factor)."""
    if msgs is None:
        return var.update_belief()
    ex = ey = lam = 0.0
    for m in msgs:
        ex += m.eta_x
        ey += m.eta_y
        lam += m.lam
    var.belief = GaussianCanonical(ex, ey, lam)
    return var.belief


class Factor:
    """Anchor (one endpoint) or relative measurement (two endpoints, ``x1 - x0 ~ z``).

    An endpoint may be ``None`` when it lives on another robot; messages to it
    are then produced on request (see :mod:`dsa.wire`).
    """

    __slots__ = ("kind", "z", "vars", "last_sent")

    ANCHOR = "anchor"
    MEASUREMENT = "measurement"

    def __init__(self, kind: str, z: GaussianCanonical, variables: Sequence[VariableNode | None]):
        n = 1 if kind == self.ANCHOR else 2
        if len(variables) != n:
            raise ValueError(f"{kind} factor needs {n} endpoint(s), got {len(variables)}")
        if kind == self.MEASUREMENT and not z.lam > 0:
            raise ValueError("measurement factor needs positive precision")
        self.kind = kind
        self.z = z
        self.vars = list(variables)
        self.last_sent = [ZERO] * n
        for side, v in enumerate(self.vars):
            if v is not None:
                v.factors.append((self, side))

    def detach(self):
        for side, v in enumerate(self.vars):
            if v is not None:
                v.factors.remove((self, side))
        self.vars = [None] * len(self.vars)

    def incoming(self, side: int) -> GaussianCanonical:
        """Variable-to-factor message from endpoint ``side``."""
        v = self.vars[side]
        if v is None:
            return ZERO
        return canonical_sub(v.belief, self.last_sent[side])

    def compute_message(self, side: int) -> GaussianCanonical:
        """Undamped factor-to-variable message toward endpoint ``side``."""
        if self.kind == self.ANCHOR:
            return self.z
        if side == 0:
            return message_to_first(self.z, self.incoming(1))
        return message_to_second(self.z, self.incoming(0))

    def send(self, side: int, r_damp: float = R_DAMP, counters=None) -> GaussianCanonical:
        """Compute, damp and cache the message to ``side``; update that belief."""
        new = self.compute_message(side)
        prev = self.last_sent[side]
        keep = 1.0 - r_damp
        msg = GaussianCanonical(keep * new.eta_x + r_damp * prev.eta_x,
                                keep * new.eta_y + r_damp * prev.eta_y,
                                keep * new.lam + r_damp * prev.lam)
        self.last_sent[side] = msg
        v = self.vars[side]
        if v is not None:
            v.update_belief()
            if counters is not None:
                counters.belief_update(len(v.factors))
        if counters is not None and self.kind != self.ANCHOR:
            counters.flops += FLOPS_MSG_TO_FIRST if side == 0 else FLOPS_MSG_TO_SECOND
        return msg

    def __repr__(self):
        keys = [None if v is None else v.key for v in self.vars]
        return f"Factor({self.kind}, z={self.z}, vars={keys})"


def propagate(factor: Factor, r_damp: float = R_DAMP, counters=None) -> None:
    """Send from ``factor`` to each local endpoint in turn."""
    if counters is None and factor.kind == Factor.MEASUREMENT and None not in factor.vars:
        _propagate_local_measurement(factor, r_damp)
        return
    for side, v in enumerate(factor.vars):
        if v is not None:
            factor.send(side, r_damp, counters)


def _propagate_local_measurement(f: Factor, r_damp: float) -> None:
    # Inlined Factor.send for both endpoints; same arithmetic, no accounting.
    keep = 1.0 - r_damp
    z = f.z
    zl, zx, zy = z.lam, z.eta_x, z.eta_y
    sent = f.last_sent
    va, vb = f.vars
    for side in (0, 1):
        other = vb if side == 0 else va
        b, o = other.belief, sent[1 - side]
        lam_in = b.lam - o.lam
        if lam_in <= 0.0:
            nx = ny = nl = 0.0
        else:
            alpha = zl / (zl + lam_in)
            beta = 1.0 - alpha if side else alpha - 1.0
            nx = alpha * (b.eta_x - o.eta_x) + beta * zx
            ny = alpha * (b.eta_y - o.eta_y) + beta * zy
            nl = alpha * lam_in
        p = sent[side]
        sent[side] = GaussianCanonical(keep * nx + r_damp * p.eta_x,
                                       keep * ny + r_damp * p.eta_y,
                                       keep * nl + r_damp * p.lam)
        (va if side == 0 else vb).update_belief()


class FactorGraph:
    """Plain container of variables and factors, used by the oracle tests and
    as the base of the per-robot graph."""

    def __init__(self, r_damp: float = R_DAMP):
        self.r_damp = r_damp
        self.variables: list[VariableNode] = []
        self.factors: list[Factor] = []
        self.counters = None

    def add_variable(self, key=None) -> VariableNode:
        v = VariableNode(len(self.variables) if key is None else key)
        self.variables.append(v)
        return v

    def add_anchor(self, var: VariableNode, z: GaussianCanonical) -> Factor:
        f = Factor(Factor.ANCHOR, z, [var])
        self.factors.append(f)
        return f

    def add_measurement(self, first: VariableNode, second: VariableNode, z: GaussianCanonical) -> Factor:
        f = Factor(Factor.MEASUREMENT, z, [first, second])
        self.factors.append(f)
        return f

    def sweep(self, index: int) -> None:
        propagate(self.factors[index], self.r_damp, self.counters)


def sweep_random_factor(graph: FactorGraph, rng: np.random.Generator) -> None:
    if not graph.factors:
        raise ValueError("graph has no factors")
    graph.sweep(int(rng.integers(len(graph.factors))))


def run_sweeps(graph: FactorGraph, n: int, rng: np.random.Generator) -> None:
    """``n`` random-factor sweeps, drawing all factor indices up front."""
    if not graph.factors:
        raise ValueError("graph has no factors")
    r_damp, counters, factors = graph.r_damp, graph.counters, graph.factors
    for i in rng.integers(len(factors), size=n).tolist():
        propagate(factors[i], r_damp, counters)


class SingularGraphError(ValueError):
    pass


def solve_dense(graph: FactorGraph) -> list[GaussianMoments]:
    """Exact marginals by solving the assembled information system.

    The precision matrix is shared by both axes, so it is assembled once and
    solved against a two-column right-hand side.
    """
    index = {id(v): k for k, v in enumerate(graph.variables)}
    n = len(graph.variables)
    A = np.zeros((n, n))
    b = np.zeros((n, 2))
    adj: list[list[int]] = [[] for _ in range(n)]
    anchored = [False] * n
    for f in graph.factors:
        ks = [index[id(v)] for v in f.vars if v is not None]
        if f.kind == Factor.ANCHOR:
            (k,) = ks
            A[k, k] += f.z.lam
            b[k] += f.z.eta
            if f.z.lam > 0:
                anchored[k] = True
            continue
        if len(ks) != 2:
            continue
        i, j = ks
        lam = f.z.lam
        A[i, i] += lam
        A[j, j] += lam
        A[i, j] -= lam
        A[j, i] -= lam
        b[i] -= f.z.eta
        b[j] += f.z.eta
        adj[i].append(j)
        adj[j].append(i)

    seen = [False] * n
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        queue, has_anchor = deque([start]), False
        while queue:
            k = queue.popleft()
            has_anchor |= anchored[k]
            for m in adj[k]:
                if not seen[m]:
                    seen[m] = True
                    queue.append(m)
        if not has_anchor:
            raise SingularGraphError(f"component containing variable {graph.variables[start].key!r} has no anchor")

    cov = np.linalg.inv(A)
    mu = cov @ b
    return [GaussianMoments(float(mu[k, 0]), float(mu[k, 1]), float(cov[k, k])) for k in range(n)]
