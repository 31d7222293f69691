import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dsa.behaviors import CarrierKnowledge, Disk
from dsa.metrics import (
    RunMetrics,
    detect_convergence,
    in_shape_fraction,
    proxy_stats,
    r_error,
    s_error,
)

points = st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=20)


def test_r_error_examples():
    assert r_error([(1, 1)] * 4) == 0
    assert r_error([(0, 0), (1, 0)]) == 0.5
    assert r_error([(0, 0), (1, 0), (0, 1), (1, 1)]) == pytest.approx(math.sqrt(2) / 2)
    with pytest.raises(ValueError):
        r_error([])


@given(points, st.floats(-50, 50), st.floats(-50, 50))
def test_r_error_translation_invariant(pts, dx, dy):
    moved = [(x + dx, y + dy) for x, y in pts]
    assert r_error(moved) == pytest.approx(r_error(pts), abs=1e-9)


@given(points)
def test_r_error_matches_brute_force(pts):
    cx = sum(p[0] for p in pts) / len(pts)
    cy = sum(p[1] for p in pts) / len(pts)
    brute = sum(math.hypot(x - cx, y - cy) for x, y in pts) / len(pts)
    assert r_error(pts) == pytest.approx(brute, rel=1e-9, abs=1e-9)


@given(st.tuples(st.floats(-10, 10), st.floats(-10, 10)))
def test_r_error_two_robots_is_half_offset(d):
    assert r_error([(0, 0), d]) == pytest.approx(math.hypot(*d) / 2, abs=1e-12)


def test_detect_convergence():
    series = [(t, 1.0 / (t + 1)) for t in range(100)]
    assert detect_convergence(series) == 25
    assert detect_convergence([(0, None), (1, 0.05), (2, 0.039)]) == 2
    assert detect_convergence([(t, 0.05) for t in range(10)]) is None


def perfect_knowledge(gt, origins):
    ks = []
    for o in origins:
        k = CarrierKnowledge(len(gt))
        k.mu[:] = np.asarray(gt) - o
        k.t_observed[:] = 1.0
        ks.append(k)
    return ks


def test_s_error_examples():
    gt = np.array([[1.0, 1.0], [2, 3], [4, 0], [0, 4], [3, 3]])
    origins = np.random.default_rng(0).normal(size=(10, 2))
    ks = perfect_knowledge(gt, origins)
    assert s_error(gt, ks, origins) == pytest.approx(0, abs=1e-12)
    ks[3].mu[2] += (0.1, 0)
    assert s_error(gt, ks, origins) == pytest.approx(0.002)
    ks[0].t_observed[1] = 0
    assert s_error(gt, ks, origins) is None


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=3, max_size=3))
def test_s_error_nonnegative(noise):
    gt = np.array([[1.0, 1.0], [2, 3], [4, 0]])
    ks = perfect_knowledge(gt, [(0, 0)])
    ks[0].mu += np.array(noise)
    assert s_error(gt, ks, [(0, 0)]) >= 0


def test_proxy_stats_examples():
    assert proxy_stats([(30, 10), (60, 20), (10, 50)]) == 1.0
    assert proxy_stats([(30, 10), (100, 10)]) == 0.5
    assert proxy_stats([(None, 4), (30, 10)]) == 1.0
    with pytest.raises(ValueError):
        proxy_stats([(None, 1)])


def test_in_shape_fraction_uses_shared_origin():
    pos = np.array([[2.0, 2.0], [2.5, 2.0], [4.0, 4.0], [0.0, 0.0]])
    assert in_shape_fraction(pos, (2, 2), Disk(1.0)) == 0.5


def test_run_metrics_records_first_crossing():
    m = RunMetrics()
    for t, e in [(0, None), (1, 0.5), (2, 0.03), (3, 0.2)]:
        m.record({"t": t, "r_error": e}, 0.02)
    assert m.t_conv == 2
    m.t_met_half = [10, None, 30]
    assert m.t_met_half_median() == 20
    assert m.coverage(3) == 1.0
    assert m.steady_mean("r_error", 2) == pytest.approx(0.115)
