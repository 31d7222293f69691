"""Deterministic 2D arena with holonomic disk robots and movable carriers.

Physics is deliberately simple: proportional force control toward the
commanded velocity, explicit Euler integration at 60 Hz, and overlap
projection with an equal-mass elastic exchange of the normal velocity
components on contact. Walls reflect the normal component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DT = 1.0 / 60.0
ROBOT_RADIUS = 0.125
ROBOT_MASS = 2.0
V_MAX = 1.0
K_P = 10.0
F_MAX = 20.0
CARRIER_RADIUS = 0.125
CARRIER_MOVE = 1.0
MAX_PLACEMENT_RETRIES = 10_000
COLLISION_PASSES = 4


class InfeasibleDensity(RuntimeError):
    """Random placement could not fit every body into the arena."""


@dataclass
class WorldConfig:
    arena_side: float = 5.0
    n_robots: int = 10
    n_carriers: int = 0
    sigma_velocity: float = 0.1
    sigma_position: float = 0.02
    r_sense: float = 0.5
    t_node: float = 0.5
    t_message: float = 0.1
    n_window: int = 10
    v_fast: float = 0.5
    v_slow: float = 0.05
    v_c_agg: float = 0.0
    r_damp: float = 0.8
    beta: float = 3.0
    seed: int = 0

    def __post_init__(self):
        for name in ("arena_side", "sigma_position", "r_sense", "t_node", "t_message", "v_fast", "v_slow"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_robots < 1 or self.n_window < 1:
            raise ValueError("n_robots and n_window must be >= 1")
        if self.n_carriers < 0 or self.sigma_velocity < 0 or self.v_c_agg < 0:
            raise ValueError("n_carriers, sigma_velocity and v_c_agg must be non-negative")
        if not 0 <= self.r_damp < 1:
            raise ValueError("r_damp must be in [0, 1)")

    @property
    def area(self) -> float:
        return self.arena_side ** 2


@dataclass
class Senses:
    v_sense: np.ndarray
    # (robot id, noisy relative position) for robots within r_sense
    robots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    # (carrier id, noisy relative position) for carriers within r_sense
    carriers: list[tuple[int, np.ndarray]] = field(default_factory=list)
    p_odom: np.ndarray | None = None
    p_robot: np.ndarray | None = None
    converged: bool = False

    @property
    def nearest_bearing(self) -> np.ndarray | None:
        """Unit vector toward the nearest sensed robot, or None."""
        if not self.robots:
            return None
        rel = min((r for _, r in self.robots), key=lambda r: r[0] * r[0] + r[1] * r[1])
        n = float(np.hypot(rel[0], rel[1]))
        return rel / n if n > 0 else None


def robot_streams(seed: int, n_robots: int):
    """World stream plus (sense, control, gbp) streams per robot, all spawned
    from one SeedSequence so each robot's draws are independent of iteration order."""
    world_ss, *robot_ss = np.random.SeedSequence(seed).spawn(n_robots + 1)
    robots = [tuple(np.random.default_rng(s) for s in ss.spawn(3)) for ss in robot_ss]
    return np.random.default_rng(world_ss), robots


_EMPTY = np.zeros(0, dtype=np.intp)


def _rows(mask: np.ndarray) -> list[np.ndarray]:
    """Column indices of the True entries of each row (most rows are empty)."""
    out = [_EMPTY] * len(mask)
    for i in np.flatnonzero(mask.any(axis=1)):
        out[i] = np.flatnonzero(mask[i])
    return out


class World:
    def __init__(self, cfg: WorldConfig):
        self.cfg = cfg
        self.rng, streams = robot_streams(cfg.seed, cfg.n_robots)
        self.sense_rngs = [s[0] for s in streams]
        self.control_rngs = [s[1] for s in streams]
        self.gbp_rngs = [s[2] for s in streams]
        n, m = cfg.n_robots, cfg.n_carriers
        self.pos = np.zeros((n, 2))
        self.vel = np.zeros((n, 2))
        self.cmd = np.zeros((n, 2))
        # realised displacement per tick / dt, including contact corrections;
        # this is what odometry observes
        self.true_vel = np.zeros((n, 2))
        self.carrier_pos = np.zeros((m, 2))
        self.moving: int | None = None
        self.move_target = np.zeros(2)
        self.carrier_path = 0.0
        self.carrier_moves = 0
        self.t = 0.0
        self.tick = 0
        self.dist = np.zeros((n, n))
        self.carrier_dist = np.zeros((n, m))
        self._pairs = np.triu_indices(n, 1)
        self._near: list[np.ndarray] = [_EMPTY] * n
        self._cnear: list[np.ndarray] = [_EMPTY] * n

    # -- setup -------------------------------------------------------------

    def spawn(self) -> None:
        cfg = self.cfg
        placed: list[tuple[float, float, float]] = []

        def place(radius):
            lo, hi = radius, cfg.arena_side - radius
            if hi < lo:
                raise InfeasibleDensity("arena smaller than one body")
            for _ in range(MAX_PLACEMENT_RETRIES):
                x, y = self.rng.uniform(lo, hi, size=2)
                if all((x - px) ** 2 + (y - py) ** 2 >= (radius + pr) ** 2 for px, py, pr in placed):
                    placed.append((x, y, radius))
                    return (x, y)
            raise InfeasibleDensity(
                f"could not place {cfg.n_robots} robots and {cfg.n_carriers} carriers "
                f"in a {cfg.arena_side} m arena")

        for i in range(cfg.n_robots):
            self.pos[i] = place(ROBOT_RADIUS)
        for c in range(cfg.n_carriers):
            self.carrier_pos[c] = place(CARRIER_RADIUS)
        self._update_distances()

    # -- dynamics ----------------------------------------------------------

    def step(self, dt: float = DT) -> None:
        cfg = self.cfg
        force = K_P * ROBOT_MASS * (self.cmd - self.vel)
        fmag = np.hypot(force[:, 0], force[:, 1])
        over = fmag > F_MAX
        if over.any():
            force[over] *= (F_MAX / fmag[over])[:, None]
        self.vel += force * (dt / ROBOT_MASS)
        self._clip_speed()
        before = self.pos.copy()
        self.pos += self.vel * dt
        self._resolve_contacts()
        self._resolve_walls()
        self.true_vel = (self.pos - before) / dt
        self.carrier_scheduler()
        self._advance_carriers(dt)
        self.tick += 1
        self.t = self.tick * dt
        self._update_distances()

    def _clip_speed(self) -> None:
        s = np.hypot(self.vel[:, 0], self.vel[:, 1])
        fast = s > V_MAX
        if fast.any():
            self.vel[fast] *= (V_MAX / s[fast])[:, None]

    def _resolve_contacts(self) -> None:
        n = len(self.pos)
        if n < 2:
            return
        iu, ju = self._pairs
        reach = 2 * ROBOT_RADIUS
        for k in range(COLLISION_PASSES):
            d = self.pos[iu] - self.pos[ju]
            dist = np.hypot(d[:, 0], d[:, 1])
            hit = dist < reach
            if not hit.any():
                return
            i, j, d, dist = iu[hit], ju[hit], d[hit], dist[hit]
            normal = np.empty_like(d)
            ok = dist > 1e-12
            normal[ok] = d[ok] / dist[ok, None]
            normal[~ok] = (1.0, 0.0)
            push = 0.5 * (reach - dist)[:, None] * normal
            np.add.at(self.pos, i, push)
            np.add.at(self.pos, j, -push)
            if k == 0:
                vn = np.einsum("ij,ij->i", self.vel[i] - self.vel[j], normal)
                closing = vn < 0
                if closing.any():
                    imp = vn[closing, None] * normal[closing]
                    np.add.at(self.vel, i[closing], -imp)
                    np.add.at(self.vel, j[closing], imp)

    def _resolve_walls(self) -> None:
        lo, hi = ROBOT_RADIUS, self.cfg.arena_side - ROBOT_RADIUS
        for axis in (0, 1):
            p, v = self.pos[:, axis], self.vel[:, axis]
            below, above = p < lo, p > hi
            p[below], p[above] = lo, hi
            v[below & (v < 0)] *= -1.0
            v[above & (v > 0)] *= -1.0

    def _update_distances(self) -> None:
        d = self.pos[:, None, :] - self.pos[None, :, :]
        self.dist = np.hypot(d[..., 0], d[..., 1])
        near = self.dist <= self.cfg.r_sense
        np.fill_diagonal(near, False)
        self._near = _rows(near)
        if self.cfg.n_carriers:
            d = self.carrier_pos[None, :, :] - self.pos[:, None, :]
            self.carrier_dist = np.hypot(d[..., 0], d[..., 1])
            self._cnear = _rows(self.carrier_dist <= self.cfg.r_sense)

    # -- carriers ----------------------------------------------------------

    @property
    def carrier_speed(self) -> float:
        return self.cfg.v_c_agg * self.cfg.n_carriers

    def carrier_scheduler(self) -> None:
        """Start a new 1 m move on a random carrier when none is moving."""
        if self.moving is not None or self.carrier_speed <= 0 or not self.cfg.n_carriers:
            return
        c = int(self.rng.integers(self.cfg.n_carriers))
        lo, hi = CARRIER_RADIUS, self.cfg.arena_side - CARRIER_RADIUS
        start = self.carrier_pos[c]
        for _ in range(MAX_PLACEMENT_RETRIES):
            a = self.rng.uniform(0.0, 2 * np.pi)
            target = start + CARRIER_MOVE * np.array([np.cos(a), np.sin(a)])
            if lo <= target[0] <= hi and lo <= target[1] <= hi:
                break
        else:
            return
        self.moving = c
        self.move_target = target

    def _advance_carriers(self, dt: float) -> None:
        budget = self.carrier_speed * dt
        while self.moving is not None and budget > 0:
            c = self.moving
            d = self.move_target - self.carrier_pos[c]
            left = float(np.hypot(d[0], d[1]))
            if left <= budget:
                self.carrier_pos[c] = self.move_target
                self.carrier_path += left
                budget -= left
                self.moving = None
                self.carrier_moves += 1
                self.carrier_scheduler()
            else:
                self.carrier_pos[c] += d * (budget / left)
                self.carrier_path += budget
                budget = 0.0

    # -- sensing -----------------------------------------------------------

    def neighbours(self, i: int) -> np.ndarray:
        return self._near[i]

    def sense(self, i: int, rng: np.random.Generator | None = None) -> Senses:
        """Noisy senses of robot ``i``: one velocity-scale draw, then 2D
        position noise for every robot and carrier in range, in that order."""
        cfg = self.cfg
        rng = self.sense_rngs[i] if rng is None else rng
        near = self._near[i]
        cnear = self._cnear[i] if cfg.n_carriers else near[:0]
        z = rng.standard_normal(1 + 2 * (len(near) + len(cnear)))
        senses = Senses(v_sense=self.true_vel[i] * (1.0 + cfg.sigma_velocity * z[0]))
        noise = cfg.sigma_position * z[1:].reshape(-1, 2)
        if len(near):
            rel = self.pos[near] - self.pos[i] + noise[:len(near)]
            senses.robots = list(zip(near.tolist(), rel))
        if len(cnear):
            rel = self.carrier_pos[cnear] - self.pos[i] + noise[len(near):]
            senses.carriers = list(zip(cnear.tolist(), rel))
        return senses
