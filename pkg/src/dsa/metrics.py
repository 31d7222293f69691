"""Simulator-side measurements (need ground truth, so robots never see them)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .behaviors import CarrierKnowledge


def r_error(origins) -> float:
    """Mean distance of each robot's origin estimate from their centroid."""
    o = np.asarray(origins, dtype=float).reshape(-1, 2)
    if len(o) == 0:
        raise ValueError("need at least one origin")
    d = o - o.mean(axis=0)
    return float(np.mean(np.hypot(d[:, 0], d[:, 1])))


def detect_convergence(series, sigma_position: float = 0.02) -> float | None:
    """First time at which ``r_error < 2 sigma_position``; None if never."""
    threshold = 2 * sigma_position
    for t, err in series:
        if err is not None and err < threshold:
            return t
    return None


def s_error(carrier_gt, knowledge: list[CarrierKnowledge], origins) -> float | None:
    """Mean distance between every robot's carrier estimate and the true
    carrier position expressed in that robot's frame.

    Returns None until every robot has observed every carrier.
    """
    gt = np.asarray(carrier_gt, dtype=float).reshape(-1, 2)
    if not knowledge or not all(k.complete() for k in knowledge):
        return None
    total = 0.0
    for k, origin in zip(knowledge, origins):
        d = k.mu - (gt - np.asarray(origin))
        total += float(np.sum(np.hypot(d[:, 0], d[:, 1])))
    return total / (len(knowledge) * len(gt))


def proxy_stats(pairs, beta: float = 3.0) -> float:
    """Fraction of (t_conv, t_met_half) pairs where ``beta * t_met_half >= t_conv``."""
    pairs = [(tc, tm) for tc, tm in pairs if tc is not None and tm is not None]
    if not pairs:
        raise ValueError("no converged pairs")
    return sum(beta * tm >= tc for tc, tm in pairs) / len(pairs)


def in_shape_fraction(positions, shared_origin, shape) -> float:
    """Fraction of robots whose true position, in the shared frame, lies in ``shape``."""
    rel = np.asarray(positions) - np.asarray(shared_origin)
    return sum(bool(shape(p)) for p in rel) / len(rel)


@dataclass
class RunMetrics:
    series: list[dict] = field(default_factory=list)
    t_conv: float | None = None
    t_met_half: list[float | None] = field(default_factory=list)

    def record(self, row: dict, sigma_position: float) -> None:
        self.series.append(row)
        err = row.get("r_error")
        if self.t_conv is None and err is not None and err < 2 * sigma_position:
            self.t_conv = row["t"]

    def t_met_half_median(self) -> float | None:
        vals = [t for t in self.t_met_half if t is not None]
        return float(np.median(vals)) if vals else None

    def coverage(self, beta: float) -> float | None:
        if self.t_conv is None:
            return None
        vals = [(self.t_conv, t) for t in self.t_met_half if t is not None]
        return proxy_stats(vals, beta) if vals else None

    def steady_mean(self, key: str, t_from: float) -> float | None:
        vals = [r[key] for r in self.series if r["t"] >= t_from and r.get(key) is not None]
        return float(np.mean(vals)) if vals else None
