"""Scenario runner.

Tick order (every 1/60 s, tick k >= 1):

1. physics step (commands from the previous tick; carriers advance)
2. senses per robot; odometry integration; encounters; carrier observations
3. controller per robot -> commanded velocity
4. every t_node: new variable on every robot, then outward observations
5. every t_message: one random-factor sweep per robot and partner choice,
   then the request/response exchanges in ascending requester id
6. every second: metrics sample

Steps 2-5a only touch per-robot state and per-robot RNG streams, so the
iteration order over robots does not affect results. Exchanges mutate two
robots at once and always run in ascending requester id.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import wire
from .behaviors import (
    CarrierKnowledge,
    EncounterTracker,
    RwState,
    dsa_ke,
    dsa_rw,
    dsa_sf,
    exchange_carrier_knowledge,
    make_shape,
    observe_carrier,
)
from .metrics import RunMetrics, in_shape_fraction, r_error, s_error
from .swarm_graph import Observation, RobotGraph
from .world import DT, InfeasibleDensity, World, WorldConfig

KINDS = ("converge_sweep", "beta_calibration", "shape_formation", "logistics")
BEHAVIOURS = {"rw": "rw", "dsa-rw": "rw", "sf": "sf", "dsa-sf": "sf", "ke": "ke", "dsa-ke": "ke"}
SAMPLE_PERIOD = 1.0

SERIES_COLUMNS = ("t", "r_error", "s_error", "flops_s", "bytes_s", "in_shape")
FRAME_COLUMNS = ("t", "kind", "id", "x", "y", "est_x", "est_y")


class ConfigError(ValueError):
    pass


@dataclass
class RunSpec:
    """Everything needed to run one (cell, seed)."""

    world: WorldConfig
    kind: str = "converge_sweep"
    behaviour: str = "rw"
    shapes: tuple[str, ...] = ("disk",)
    shape_period_s: float = 120.0
    duration: float = 1000.0
    stop_at_convergence: bool = False
    steady_start: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        b = BEHAVIOURS.get(self.behaviour.lower())
        if b is None:
            raise ConfigError(f"unknown behaviour {self.behaviour!r}; expected rw, sf or ke")
        self.behaviour = b
        for s in self.shapes:
            make_shape(s, self.world.arena_side)
        if not self.duration > 0 or not self.shape_period_s > 0:
            raise ConfigError("duration and shape_period_s must be positive")

    @property
    def steady_from(self) -> float:
        return self.duration / 2 if self.steady_start is None else self.steady_start


@dataclass
class RunResult:
    seed: int
    status: str
    metrics: RunMetrics = field(default_factory=RunMetrics)
    frames: list[tuple] = field(default_factory=list)
    t_end: float = 0.0
    message_sizes_ok: bool = True
    steady: dict = field(default_factory=dict)

    def coverage(self, beta: float):
        return self.metrics.coverage(beta)


def _ticks(period: float, name: str) -> int:
    n = period / DT
    k = round(n)
    if k < 1 or abs(n - k) > 1e-6:
        raise ConfigError(f"{name}={period} is not a whole number of 1/60 s ticks")
    return k


class Simulation:
    def __init__(self, spec: RunSpec, snapshot_every: float | None = None, wire_dump=None,
                 shuffle_order: bool = False):
        self.spec = spec
        cfg = self.cfg = spec.world
        self.node_ticks = _ticks(cfg.t_node, "t_node")
        self.msg_ticks = _ticks(cfg.t_message, "t_message")
        self.sample_ticks = _ticks(SAMPLE_PERIOD, "sample period")
        self.snap_ticks = _ticks(snapshot_every, "snapshot_every") if snapshot_every else None
        self.wire_dump = wire_dump
        self.shuffle_order = shuffle_order

        self.world = World(cfg)
        n = cfg.n_robots
        self.counters = [wire.ResourceCounters() for _ in range(n)]
        self.graphs = [RobotGraph(i, n_window=cfg.n_window, sigma_velocity=cfg.sigma_velocity,
                                  sigma_position=cfg.sigma_position, r_damp=cfg.r_damp,
                                  counters=self.counters[i]) for i in range(n)]
        self.trackers = [EncounterTracker(beta=cfg.beta) for _ in range(n)]
        self.knowledge = [CarrierKnowledge(cfg.n_carriers) for _ in range(n)]
        self.rw = [RwState.new(rng) for rng in self.world.control_rngs]
        self.shapes = [make_shape(s, cfg.arena_side) for s in spec.shapes]
        self.metrics = RunMetrics()
        self.frames: list[tuple] = []
        self.senses = [None] * n
        self._order_rng = np.random.default_rng(cfg.seed + 7919) if shuffle_order else None
        self._last_totals = (0, 0)
        self.sizes_ok = True

    # -- helpers -----------------------------------------------------------

    def order(self) -> list[int]:
        idx = list(range(self.cfg.n_robots))
        if self._order_rng is not None:
            self._order_rng.shuffle(idx)
        return idx

    def shape_at(self, t: float):
        k = int(t // self.spec.shape_period_s) % len(self.shapes)
        return self.shapes[k]

    def origins(self):
        """World-frame origin estimate per robot (None where not localized)."""
        pos = self.world.pos
        return [g.local_origin(pos[i]) if g.is_localized() else None for i, g in enumerate(self.graphs)]

    # -- loop --------------------------------------------------------------

    def run(self) -> RunResult:
        try:
            self.world.spawn()
        except InfeasibleDensity:
            return RunResult(self.cfg.seed, "infeasible")
        n_ticks = int(round(self.spec.duration / DT))
        self._start()
        for k in range(1, n_ticks + 1):
            self._tick(k)
            if self.spec.stop_at_convergence and self._done():
                break
        return RunResult(self.cfg.seed, "ok", self.metrics, self.frames, self.world.t,
                         self.sizes_ok, self._steady())

    def _done(self) -> bool:
        return self.metrics.t_conv is not None and all(tr.t_met_half is not None for tr in self.trackers)

    def _start(self) -> None:
        w = self.world
        for i in self.order():
            self.graphs[i].advance_timestep()
            s = self.senses[i] = w.sense(i)
            self.trackers[i].update((j for j, _ in s.robots), 0.0, self.cfg.n_robots)
            for j, rel in s.robots:
                self.graphs[i].record_observation(Observation(j, tuple(rel), 0))
        self.metrics.t_met_half = [None] * self.cfg.n_robots
        self._sample()
        if self.snap_ticks:
            self._snapshot()

    def _tick(self, k: int) -> None:
        w, cfg, spec = self.world, self.cfg, self.spec
        w.step(DT)
        t = w.t
        order = self.order()
        node = k % self.node_ticks == 0
        msg = k % self.msg_ticks == 0
        shape = self.shape_at(t) if spec.behaviour == "sf" else None

        for i in order:
            g, tr = self.graphs[i], self.trackers[i]
            s = self.senses[i] = w.sense(i)
            g.integrate_velocity(s.v_sense, DT)
            if s.robots:
                tr.update((j for j, _ in s.robots), t, cfg.n_robots)
            if g.is_localized():
                s.p_robot = g.current_pose()
                if s.carriers:
                    var = g.pose_variance()
                    for c, rel in s.carriers:
                        observe_carrier(self.knowledge[i], c, s.p_robot, var, rel, t, cfg.sigma_position)
            s.p_odom = g.p_odom
            s.converged = tr.converged(t)
            crng = w.control_rngs[i]
            if spec.behaviour == "rw" or not s.converged:
                v = dsa_rw(self.rw[i], crng, DT, cfg.v_fast)
            elif spec.behaviour == "sf":
                v = dsa_sf(s, shape, self.rw[i], crng, DT, cfg.v_fast, cfg.v_slow)
            else:
                v = dsa_ke(s, self.knowledge[i], self.rw[i], crng, DT, cfg.v_fast)
            w.cmd[i] = v

        if node:
            for i in order:
                g = self.graphs[i]
                g.advance_timestep()
                for j, rel in self.senses[i].robots:
                    g.record_observation(Observation(j, tuple(rel), g.current_ts))

        if msg:
            partners = {}
            for i in order:
                rng = w.gbp_rngs[i]
                self.graphs[i].sweep_random(rng)
                near = [j for j, _ in self.senses[i].robots]
                if near:
                    partners[i] = near[int(rng.integers(len(near)))]
            for i in sorted(partners):
                j = partners[i]
                n_req, n_resp = wire.exchange(self.graphs[i], self.graphs[j], self.wire_dump)
                self._check_sizes(i, j, n_req, n_resp)
                if cfg.n_carriers:
                    exchange_carrier_knowledge(self.knowledge[i], self.knowledge[j])

        for i in order:
            tr = self.trackers[i]
            if tr.t_met_half is not None and self.metrics.t_met_half[i] is None:
                self.metrics.t_met_half[i] = tr.t_met_half

        if k % self.sample_ticks == 0:
            self._sample()
        if self.snap_ticks and k % self.snap_ticks == 0:
            self._snapshot()

    def _check_sizes(self, i: int, j: int, n_req: int, n_resp: int) -> None:
        n_entries = len(self.graphs[i].outward_timesteps(j))
        if n_req != wire.request_size(n_entries) or (n_resp - wire.HEADER_BYTES) % wire.RESPONSE_ITEM_BYTES:
            self.sizes_ok = False

    def _sample(self) -> None:
        w, cfg = self.world, self.cfg
        origins = self.origins()
        localized = all(o is not None for o in origins)
        row = {"t": w.t, "r_error": None, "s_error": None, "flops_s": None, "bytes_s": None, "in_shape": None}
        if localized:
            row["r_error"] = r_error(origins)
            if cfg.n_carriers:
                row["s_error"] = s_error(w.carrier_pos, self.knowledge, origins)
            if self.spec.behaviour == "sf":
                row["in_shape"] = in_shape_fraction(w.pos, np.mean(origins, axis=0), self.shape_at(w.t))
        flops = sum(c.flops for c in self.counters)
        nbytes = sum(c.bytes_tx + c.bytes_rx for c in self.counters)
        if w.t > 0:
            scale = 1.0 / (cfg.n_robots * SAMPLE_PERIOD)
            row["flops_s"] = (flops - self._last_totals[0]) * scale
            row["bytes_s"] = (nbytes - self._last_totals[1]) * scale
        self._last_totals = (flops, nbytes)
        self.metrics.record(row, cfg.sigma_position)

    def _snapshot(self) -> None:
        w = self.world
        t = w.t
        for i, g in enumerate(self.graphs):
            x, y = w.pos[i]
            if g.is_localized():
                ex, ey = g.current_pose()
                ox, oy = w.pos[i] - (ex, ey)
                self.frames.append((t, "robot", i, x, y, ex, ey))
                self.frames.append((t, "origin", i, ox, oy, None, None))
            else:
                self.frames.append((t, "robot", i, x, y, None, None))
        for c in range(self.cfg.n_carriers):
            est = [k.mu[c] for k in self.knowledge if k.t_observed[c] > 0]
            ex, ey = np.mean(est, axis=0) if est else (None, None)
            x, y = w.carrier_pos[c]
            self.frames.append((t, "carrier", c, x, y, ex, ey))

    def _steady(self) -> dict:
        t0 = self.spec.steady_from
        m = self.metrics
        return {key: m.steady_mean(key, t0) for key in ("r_error", "s_error", "flops_s", "bytes_s", "in_shape")}


def simulate(spec: RunSpec, **kw) -> RunResult:
    return Simulation(spec, **kw).run()


# -- configuration ------------------------------------------------------------

WORLD_KEYS = tuple(f.name for f in fields(WorldConfig))
SCENARIO_KEYS = ("kind", "behaviour", "shape", "shape_period_s", "duration", "stop_at_convergence", "steady_start")
VALID_KEYS = WORLD_KEYS + SCENARIO_KEYS
REQUIRED_KEYS = ("kind", "n_robots", "arena_side", "duration")
_INT_KEYS = {"n_robots", "n_carriers", "n_window", "seed"}
_STR_KEYS = {"kind", "behaviour", "shape"}


def parse_config(text: str) -> dict[str, list[str]]:
    """Parse flat ``key = value`` text; comma-separated values form a grid axis."""
    out: dict[str, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in VALID_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}; valid keys: {', '.join(VALID_KEYS)}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values = [v.strip() for v in value.split(",")]
        if not all(values):
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        out[key] = values
    missing = [k for k in REQUIRED_KEYS if k not in out]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return out


def _convert(key: str, value: str):
    if key in _STR_KEYS:
        return value
    if key == "stop_at_convergence":
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"{key} must be a boolean, got {value!r}")
        return value.lower() in ("true", "1", "yes")
    try:
        return int(value) if key in _INT_KEYS else float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None


def expand_grid(cfg: dict[str, list[str]]) -> list[dict]:
    keys = list(cfg)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(cfg[k] for k in keys))]


def cell_spec(cell: dict[str, str]) -> RunSpec:
    vals = {k: _convert(k, v) for k, v in cell.items()}
    kind = vals.get("kind", "converge_sweep")
    default_behaviour = {"shape_formation": "sf"}.get(kind, "rw")
    try:
        world = WorldConfig(**{k: vals[k] for k in WORLD_KEYS if k in vals})
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    return RunSpec(
        world=world,
        kind=kind,
        behaviour=vals.get("behaviour", default_behaviour),
        shapes=tuple(vals.get("shape", "disk").split("+")),
        shape_period_s=vals.get("shape_period_s", 120.0),
        duration=vals["duration"],
        stop_at_convergence=vals.get("stop_at_convergence", kind in ("converge_sweep", "beta_calibration")),
        steady_start=vals.get("steady_start"),
    )


@dataclass
class Scenario:
    cells: list[dict[str, str]]
    seeds: int = 50

    @classmethod
    def from_text(cls, text: str, seeds: int = 50) -> "Scenario":
        cells = expand_grid(parse_config(text))
        for c in cells:
            cell_spec(c)  # validate every cell up front
        return cls(cells, seeds)

    @property
    def kind(self) -> str:
        return self.cells[0].get("kind", "converge_sweep")

    def jobs(self, only_seed: int | None = None):
        for ci, cell in enumerate(self.cells):
            base = int(cell.get("seed", 0))
            seeds = [only_seed] if only_seed is not None else range(base, base + self.seeds)
            for s in seeds:
                yield ci, s


# -- output -------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return ""
        return format(float(x), ".10g")
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())


def run_label(cell: int, seed: int) -> str:
    return f"cell{cell:03d}_seed{seed}"


@dataclass
class Job:
    cell_index: int
    cell: dict
    seed: int
    out_dir: str
    snapshot_every: float | None = None
    dump_path: str | None = None


def run_job(job: Job) -> list:
    """Run one (cell, seed), write its per-run files, return its run-level row."""
    spec = cell_spec(job.cell)
    spec = replace(spec, world=replace(spec.world, seed=job.seed))
    out = Path(job.out_dir)
    label = run_label(job.cell_index, job.seed)
    dump = open(job.dump_path, "wb") if job.dump_path else None
    try:
        res = Simulation(spec, snapshot_every=job.snapshot_every, wire_dump=dump).run()
    finally:
        if dump is not None:
            dump.close()
    m = res.metrics
    if res.status == "ok":
        (out / "series").mkdir(parents=True, exist_ok=True)
        _write_csv(out / "series" / f"{label}.csv", SERIES_COLUMNS,
                   ([r[c] for c in SERIES_COLUMNS] for r in m.series))
        if job.snapshot_every:
            (out / "frames").mkdir(parents=True, exist_ok=True)
            _write_csv(out / "frames" / f"{label}.csv", FRAME_COLUMNS, res.frames)
    w = spec.world
    params = [spec.kind, spec.behaviour, w.n_robots, w.arena_side, w.n_carriers, w.t_message, w.v_c_agg,
              "+".join(spec.shapes) if spec.behaviour == "sf" else ""]
    return [job.cell_index, job.seed, *params, res.status, m.t_conv, m.t_met_half_median(),
            res.coverage(spec.world.beta), res.steady.get("s_error"), res.steady.get("flops_s"),
            res.steady.get("bytes_s"), res.steady.get("in_shape"), res.t_end]


RUN_PARAM_KEYS = ("kind", "behaviour", "n_robots", "arena_side", "n_carriers", "t_message", "v_c_agg", "shape")
RUN_COLUMNS = ("cell", "seed", *RUN_PARAM_KEYS, "status", "t_conv", "t_met_half_median", "coverage",
               "s_error_steady", "flops_s_steady", "bytes_s_steady", "in_shape_steady", "t_end")


def run_scenario(scenario: Scenario, out_dir, *, threads: int = 1, snapshot_every: float | None = None,
                 dump_wire: str | None = None, only_seed: int | None = None) -> int:
    """Run every (cell, seed) and write ``runs.csv`` plus per-run series.

    Returns 0; per-run placement failures are recorded as ``infeasible`` rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = list(scenario.jobs(only_seed))
    jobs = []
    for ci, seed in pairs:
        dump = None
        if dump_wire:
            p = Path(dump_wire)
            dump = str(p) if len(pairs) == 1 else str(p.with_name(f"{p.stem}_{run_label(ci, seed)}{p.suffix}"))
        jobs.append(Job(ci, scenario.cells[ci], seed, str(out), snapshot_every, dump))
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_job, jobs))
    else:
        rows = [run_job(j) for j in jobs]
    _write_csv(out / "runs.csv", RUN_COLUMNS, rows)
    return 0


def error_line(kind: str, message: str) -> str:
    return "ERROR " + json.dumps({"type": kind, "message": message}, sort_keys=True)


def default_threads() -> int:
    return max(1, (os.cpu_count() or 1))

