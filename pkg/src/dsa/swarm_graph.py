"""Per-robot sliding-window factor graph.

Each robot owns a chain of pose variables, one per synchronised timestep,
linked by odometry factors. The oldest variable carries the anchor. Relative
observations of other robots become *outward* factors whose second endpoint is
the variable with the same timestep on the observed robot; messages for those
remote endpoints travel over the wire (see :mod:`dsa.wire`).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .gbp_core import (
    PRIOR_LAMBDA,
    R_DAMP,
    ZERO,
    Factor,
    FactorGraph,
    GaussianCanonical,
    VariableNode,
    canonical_sub,
    from_mean,
    propagate,
)

N_WINDOW = 10
SIGMA_VELOCITY = 0.1
SIGMA_POSITION = 0.02
R_SENSE = 0.5


class NotLocalized(RuntimeError):
    """The newest variable holds no information yet."""


@dataclass(frozen=True)
class Observation:
    remote_id: int
    p_object: tuple[float, float]
    ts: int


class OutwardFactor(Factor):
    """Measurement ``x_remote - x_local ~ z`` whose second endpoint is remote.

    ``remote_belief`` is the latest belief of the remote variable received
    over the wire; ``last_sent[1]`` is the last message this factor sent there.
    """

    __slots__ = ("ts", "remote_id", "remote_belief")

    def __init__(self, z: GaussianCanonical, local: VariableNode, ts: int, remote_id: int):
        super().__init__(Factor.MEASUREMENT, z, [local, None])
        self.ts = ts
        self.remote_id = remote_id
        self.remote_belief = ZERO

    def incoming(self, side: int) -> GaussianCanonical:
        if side == 1:
            return canonical_sub(self.remote_belief, self.last_sent[1])
        return super().incoming(side)


class InboundMessage:
    """Slot holding the latest message a remote factor sent to a local variable."""

    __slots__ = ("last_sent", "vars")

    kind = "remote"

    def __init__(self, var: VariableNode, msg: GaussianCanonical = ZERO):
        self.last_sent = [msg]
        self.vars = [var]
        var.factors.append((self, 0))


class RobotGraph(FactorGraph):
    def __init__(self, robot_id: int, *, n_window: int = N_WINDOW,
                 sigma_velocity: float = SIGMA_VELOCITY,
                 sigma_position: float = SIGMA_POSITION,
                 prior_lambda: float = PRIOR_LAMBDA,
                 r_damp: float = R_DAMP, counters=None):
        super().__init__(r_damp)
        if n_window < 1:
            raise ValueError("n_window must be >= 1")
        self.robot_id = robot_id
        self.n_window = n_window
        self.odom_lambda = 1.0 / sigma_velocity ** 2
        self.obs_lambda = 1.0 / sigma_position ** 2
        self.prior_lambda = prior_lambda
        self.counters = counters

        self.window: deque[VariableNode] = deque()
        self.by_ts: dict[int, VariableNode] = {}
        self.anchor: Factor | None = None
        self.odometry: dict[int, Factor] = {}  # keyed by the newer endpoint's ts
        self.outward: dict[tuple[int, int], OutwardFactor] = {}
        self.inbound: dict[tuple[int, int], InboundMessage] = {}
        self.p_odom = np.zeros(2)
        self.current_ts: int | None = None

    # -- lifecycle ---------------------------------------------------------

    def integrate_velocity(self, v_sense, dt: float) -> None:
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.p_odom[0] += v_sense[0] * dt
        self.p_odom[1] += v_sense[1] * dt

    def advance_timestep(self) -> VariableNode:
        ts = 0 if self.current_ts is None else self.current_ts + 1
        var = VariableNode(ts)
        if not self.window:
            self.anchor = self._add(Factor(Factor.ANCHOR, from_mean((0.0, 0.0), self.prior_lambda), [var]))
        else:
            prev = self.window[-1]
            z = from_mean(self.p_odom, self.odom_lambda)
            link = Factor(Factor.MEASUREMENT, z, [prev, var])
            # Seed the link with its exact message so the new belief starts as
            # the previous belief shifted by p_odom (no zero-information gap).
            link.last_sent[1] = link.compute_message(1)
            var.update_belief()
            self.odometry[ts] = self._add(link)
        self.window.append(var)
        self.by_ts[ts] = var
        self.current_ts = ts
        self.p_odom = np.zeros(2)
        if len(self.window) > self.n_window:
            self._evict_oldest()
        return var

    def _add(self, f: Factor) -> Factor:
        self.factors.append(f)
        return f

    def _remove(self, f: Factor) -> None:
        self.factors.remove(f)
        f.detach()

    def _evict_oldest(self) -> None:
        old = self.window.popleft()
        new_oldest = self.window[0]
        del self.by_ts[old.key]
        self._remove(self.anchor)
        link = self.odometry.pop(new_oldest.key)
        inherited = link.last_sent[1]
        self._remove(link)
        for key in [k for k in self.outward if k[0] == old.key]:
            self._remove(self.outward.pop(key))
        for key in [k for k in self.inbound if k[0] == old.key]:
            del self.inbound[key]

        z = new_oldest.belief
        if not z.lam > 0:
            z = from_mean((0.0, 0.0), self.prior_lambda)
        anchor = Factor(Factor.ANCHOR, z, [new_oldest])
        # Keep the belief continuous: the anchor starts from what the evicted
        # link last delivered and is damped toward z on later sweeps.
        anchor.last_sent[0] = inherited
        self.anchor = self._add(anchor)
        new_oldest.update_belief()

    def record_observation(self, obs: Observation) -> OutwardFactor:
        if self.current_ts is None or obs.ts != self.current_ts:
            raise ValueError(f"observation timestep {obs.ts} is not the current timestep {self.current_ts}")
        if obs.remote_id == self.robot_id:
            raise ValueError("a robot cannot observe itself")
        # Express the observation at the epoch of the current variable.
        mu = (obs.p_object[0] + self.p_odom[0], obs.p_object[1] + self.p_odom[1])
        z = from_mean(mu, self.obs_lambda)
        key = (obs.ts, obs.remote_id)
        f = self.outward.get(key)
        if f is None:
            f = OutwardFactor(z, self.by_ts[obs.ts], obs.ts, obs.remote_id)
            self.outward[key] = self._add(f)
        else:
            f.z = z
        return f

    # -- message passing ---------------------------------------------------

    def sweep(self, index: int) -> None:
        propagate(self.factors[index], self.r_damp, self.counters)

    def sweep_random(self, rng: np.random.Generator) -> None:
        if self.factors:
            self.sweep(int(rng.integers(len(self.factors))))

    def deliver_remote_message(self, ts: int, remote_id: int, msg: GaussianCanonical) -> bool:
        """Replace the inbound message from ``remote_id``'s factor at ``ts``.

        Returns False (and does nothing) when ``ts`` is no longer in the window.
        """
        var = self.by_ts.get(ts)
        if var is None:
            return False
        slot = self.inbound.get((ts, remote_id))
        if slot is None:
            self.inbound[(ts, remote_id)] = InboundMessage(var, msg)
        else:
            slot.last_sent[0] = msg
        var.update_belief()
        if self.counters is not None:
            self.counters.belief_update(len(var.factors))
        return True

    # -- queries -----------------------------------------------------------

    @property
    def newest(self) -> VariableNode:
        if not self.window:
            raise NotLocalized("no variables yet")
        return self.window[-1]

    def current_pose(self) -> np.ndarray:
        b = self.newest.belief
        if not b.lam > 0:
            raise NotLocalized(f"robot {self.robot_id} has no position information yet")
        return np.array([b.eta_x / b.lam + self.p_odom[0], b.eta_y / b.lam + self.p_odom[1]])

    def pose_variance(self) -> float:
        b = self.newest.belief
        if not b.lam > 0:
            raise NotLocalized(f"robot {self.robot_id} has no position information yet")
        return 1.0 / b.lam

    def is_localized(self) -> bool:
        return bool(self.window) and self.window[-1].belief.lam > 0

    def local_origin(self, gt_position) -> np.ndarray:
        return np.asarray(gt_position, dtype=float) - self.current_pose()

    def outward_timesteps(self, remote_id: int) -> list[int]:
        return sorted(ts for ts, rid in self.outward if rid == remote_id)

    def check_invariants(self) -> None:
        """Raise AssertionError if the structural invariants are broken."""
        assert len(self.window) <= self.n_window
        keys = [v.key for v in self.window]
        assert keys == sorted(keys) and len(set(keys)) == len(keys)
        assert set(self.by_ts) == set(keys)
        if not self.window:
            return
        anchors = [f for f in self.factors if f.kind == Factor.ANCHOR]
        assert anchors == [self.anchor] and self.anchor.vars[0] is self.window[0]
        assert sorted(self.odometry) == keys[1:]
        for newer, older in zip(list(self.window)[1:], self.window):
            link = self.odometry[newer.key]
            assert link.vars == [older, newer]
        for (ts, rid), f in self.outward.items():
            assert ts in self.by_ts and f.vars[0] is self.by_ts[ts] and rid == f.remote_id
        for (ts, _), slot in self.inbound.items():
            assert slot.vars[0] is self.by_ts[ts]
        n_expected = 1 + len(self.odometry) + len(self.outward)
        assert len(self.factors) == n_expected
