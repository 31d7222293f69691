"""Robot controllers built on the shared frame.

``dsa_rw`` is the baseline random walk; ``dsa_sf`` forms shapes and
``dsa_ke`` steers toward the carrier with the stalest knowledge. Callers gate
the last two on :meth:`EncounterTracker.converged`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import Senses

V_FAST = 0.5
V_SLOW = 0.05
BETA = 3.0
SIGMA_POSITION = 0.02


@dataclass
class RwState:
    direction: np.ndarray
    remaining: float

    @classmethod
    def new(cls, rng: np.random.Generator) -> "RwState":
        return cls(random_direction(rng), rw_duration(rng))


def random_direction(rng: np.random.Generator) -> np.ndarray:
    a = rng.uniform(0.0, 2 * math.pi)
    return np.array([math.cos(a), math.sin(a)])


def rw_duration(rng: np.random.Generator) -> float:
    return max(0.1, rng.normal(2.0, 1.0))


def dsa_rw(state: RwState, rng: np.random.Generator, dt: float, v_fast: float = V_FAST) -> np.ndarray:
    state.remaining -= dt
    if state.remaining <= 0:
        state.direction = random_direction(rng)
        state.remaining = rw_duration(rng)
    return v_fast * state.direction


# -- shapes -----------------------------------------------------------------

@dataclass(frozen=True)
class Disk:
    radius: float

    def __call__(self, p) -> bool:
        return p[0] * p[0] + p[1] * p[1] <= self.radius * self.radius


@dataclass(frozen=True)
class HLine:
    halfwidth: float

    def __call__(self, p) -> bool:
        return abs(p[1]) <= self.halfwidth


@dataclass(frozen=True)
class VLine:
    halfwidth: float

    def __call__(self, p) -> bool:
        return abs(p[0]) <= self.halfwidth


@dataclass(frozen=True)
class Wavy:
    amplitude: float
    period: float
    halfwidth: float

    def __call__(self, p) -> bool:
        return abs(p[1] - self.amplitude * math.sin(2 * math.pi * p[0] / self.period)) <= self.halfwidth


SHAPES = ("disk", "vline", "hline", "wavy")
LINE_HALFWIDTH = 0.3


def make_shape(name: str, arena_side: float):
    if name == "disk":
        return Disk(0.25 * arena_side)
    if name == "hline":
        return HLine(LINE_HALFWIDTH)
    if name == "vline":
        return VLine(LINE_HALFWIDTH)
    if name == "wavy":
        return Wavy(0.15 * arena_side, 0.5 * arena_side, LINE_HALFWIDTH)
    raise ValueError(f"unknown shape {name!r}; expected one of {', '.join(SHAPES)}")


def in_shape(p, shape) -> bool:
    return bool(shape(p))


def dsa_sf(senses: Senses, shape, rw: RwState, rng: np.random.Generator, dt: float,
           v_fast: float = V_FAST, v_slow: float = V_SLOW) -> np.ndarray:
    dsa_rw(rw, rng, dt, v_fast)
    if senses.p_robot is None or not shape(senses.p_robot):
        return v_fast * rw.direction
    bearing = senses.nearest_bearing
    if bearing is not None:
        return v_slow * bearing
    return v_slow * rw.direction


# -- carrier knowledge --------------------------------------------------------

class CarrierKnowledge:
    """Latest estimate of every carrier in the swarm frame, with its
    observation time (0 means never observed)."""

    def __init__(self, n_carriers: int):
        self.mu = np.zeros((n_carriers, 2))
        self.var = np.zeros(n_carriers)
        self.t_observed = np.zeros(n_carriers)

    def __len__(self):
        return len(self.t_observed)

    def complete(self) -> bool:
        return bool(np.all(self.t_observed > 0))

    def copy(self) -> "CarrierKnowledge":
        k = CarrierKnowledge(len(self))
        k.mu[:], k.var[:], k.t_observed[:] = self.mu, self.var, self.t_observed
        return k


def observe_carrier(k: CarrierKnowledge, carrier: int, p_robot, robot_var: float, p_carrier_rel,
                    t: float, sigma_position: float = SIGMA_POSITION) -> bool:
    """Record an observation; stale (``t <= t_observed``) ones are ignored."""
    if t <= k.t_observed[carrier]:
        return False
    k.mu[carrier] = (p_robot[0] + p_carrier_rel[0], p_robot[1] + p_carrier_rel[1])
    k.var[carrier] = sigma_position ** 2 + robot_var
    k.t_observed[carrier] = t
    return True


def exchange_carrier_knowledge(mine: CarrierKnowledge, theirs: CarrierKnowledge) -> None:
    """Symmetric merge: for each carrier the strictly newer entry wins on both sides."""
    if len(mine) != len(theirs):
        raise ValueError("carrier tables differ in size")
    take = theirs.t_observed > mine.t_observed
    give = mine.t_observed > theirs.t_observed
    mine.mu[take], mine.var[take], mine.t_observed[take] = theirs.mu[take], theirs.var[take], theirs.t_observed[take]
    theirs.mu[give], theirs.var[give], theirs.t_observed[give] = mine.mu[give], mine.var[give], mine.t_observed[give]


def dsa_ke(senses: Senses, k: CarrierKnowledge, rw: RwState, rng: np.random.Generator, dt: float,
           v_fast: float = V_FAST) -> np.ndarray:
    rw_v = dsa_rw(rw, rng, dt, v_fast)
    if senses.p_robot is None or not k.complete():
        return rw_v
    j = int(np.argmin(k.t_observed))  # first minimum, i.e. lowest id on ties
    d = k.mu[j] - senses.p_robot
    n = float(np.hypot(d[0], d[1]))
    if n < 1e-9:
        return rw_v
    return v_fast * d / n


# -- convergence proxy ---------------------------------------------------------

@dataclass
class EncounterTracker:
    beta: float = BETA
    met: set = field(default_factory=set)
    t_met_half: float | None = None
    t_proxyconv: float | None = None

    def update(self, ids, t: float, n_robots: int) -> None:
        self.met.update(ids)
        if self.t_met_half is None and len(self.met) > n_robots / 2:
            self.t_met_half = t
            self.t_proxyconv = self.beta * t

    def converged(self, t: float) -> bool:
        return self.t_proxyconv is not None and t > self.t_proxyconv


def update_encounters(tr: EncounterTracker, ids, t: float, n_robots: int) -> None:
    tr.update(ids, t, n_robots)
