import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsa.gbp_core import (
    ZERO,
    Factor,
    FactorGraph,
    GaussianCanonical,
    GaussianMoments,
    SingularGraphError,
    VariableNode,
    belief_update,
    canonical_sub,
    canonical_sum,
    damp,
    from_mean,
    mean_of,
    measurement_messages,
    propagate,
    run_sweeps,
    solve_dense,
    sweep_random_factor,
    to_canonical,
    to_moments,
    variable_to_factor_message,
)
from dsa.wire import ResourceCounters
from randgraphs import max_mean_error, random_graph

finite = st.floats(-1e3, 1e3, allow_nan=False)
positive = st.floats(1e-3, 1e3, allow_nan=False)
gaussians = st.builds(GaussianCanonical, finite, finite, st.floats(0.0, 1e3))


def close(a, b, tol=1e-12):
    return all(math.isclose(x, y, rel_tol=tol, abs_tol=tol) for x, y in zip(a, b))


# -- conversions ----------------------------------------------------------------

def test_moments_to_canonical_examples():
    assert to_canonical(GaussianMoments(0, 0, 1)) == (0, 0, 1)
    assert to_canonical(GaussianMoments(2, 0, 0.5)) == (4, 0, 2)
    assert to_moments(GaussianCanonical(4, 0, 2)) == (2, 0, 0.5)


def test_zero_information_has_no_moments():
    with pytest.raises(ValueError):
        to_moments(ZERO)
    with pytest.raises(ValueError):
        to_canonical(GaussianMoments(0, 0, 0))


@given(finite, finite, positive)
def test_canonical_round_trip(ex, ey, lam):
    g = GaussianCanonical(ex, ey, lam)
    back = to_canonical(to_moments(g))
    assert close(back, g, 1e-9)


# -- sums and beliefs -----------------------------------------------------------

def test_canonical_sum_examples():
    assert canonical_sum(ZERO, GaussianCanonical(1, 2, 3)) == (1, 2, 3)
    assert canonical_sum(GaussianCanonical(1, 0, 1), GaussianCanonical(1, 0, 1)) == (2, 0, 2)
    assert canonical_sum(GaussianCanonical(0, 0, 10), GaussianCanonical(1, 0, 1)) == (1, 0, 11)


@given(gaussians, gaussians, gaussians)
def test_canonical_sum_commutes_and_associates(a, b, c):
    assert canonical_sum(a, b) == canonical_sum(b, a)
    assert close(canonical_sum(canonical_sum(a, b), c), canonical_sum(a, canonical_sum(b, c)), 1e-9)


def test_belief_update_examples():
    v = VariableNode(0)
    assert belief_update(v, [GaussianCanonical(0, 0, 0.01)]) == (0, 0, 0.01)
    b = belief_update(v, [GaussianCanonical(1, 0, 1), GaussianCanonical(0, 1, 1)])
    assert b == (1, 1, 2) and mean_of(b) == (0.5, 0.5)
    assert belief_update(v, []) == ZERO


def test_variable_to_factor_examples():
    assert variable_to_factor_message(GaussianCanonical(1, 0, 11), GaussianCanonical(1, 0, 1)) == (0, 0, 10)
    b = GaussianCanonical(3, -1, 2)
    assert variable_to_factor_message(b, ZERO) == b


def test_subtraction_clamps_negative_precision():
    assert canonical_sub(GaussianCanonical(1, 1, 1.0), GaussianCanonical(1, 1, 1.0 + 1e-15)) == ZERO


def test_belief_minus_last_equals_product_of_other_messages():
    # Star graph: one centre variable with three anchors; the classical
    # variable-to-factor message is the product of the other two factors.
    rng = np.random.default_rng(3)
    g = FactorGraph(r_damp=0.0)
    centre = g.add_variable()
    zs = [from_mean(rng.normal(size=2), float(rng.uniform(0.5, 5))) for _ in range(3)]
    anchors = [g.add_anchor(centre, z) for z in zs]
    for f in anchors:
        propagate(f, 0.0)
    for k, f in enumerate(anchors):
        others = canonical_sum(*[zs[m] for m in range(3) if m != k])
        assert close(variable_to_factor_message(centre.belief, f.last_sent[0]), others, 1e-12)


# -- factor messages ------------------------------------------------------------

def test_measurement_message_examples():
    z = from_mean((1, 0), 1.0)
    to_i, to_j = measurement_messages(z, GaussianCanonical(2, 0, 1), GaussianCanonical(2, 0, 1))
    assert close(to_i, (0.5, 0, 0.5)) and close(mean_of(to_i), (1, 0))
    assert close(to_j, (1.5, 0, 0.5)) and close(mean_of(to_j), (3, 0))


def test_zero_information_neighbour_sends_nothing():
    to_i, to_j = measurement_messages(from_mean((1, 0), 1.0), ZERO, ZERO)
    assert to_i == ZERO and to_j == ZERO


def test_degenerate_measurement_rejected():
    with pytest.raises(ValueError):
        measurement_messages(ZERO, GaussianCanonical(1, 0, 1), GaussianCanonical(1, 0, 1))


@settings(max_examples=200)
@given(finite, finite, positive, finite, finite, positive)
def test_message_to_first_is_exact_marginal(zx, zy, zl, mx, my, ml):
    # Oracle: put the incoming message on x_j as a prior and marginalise the
    # two-variable joint exactly; x_i's marginal is the factor's message.
    z = from_mean((zx, zy), zl)
    incoming = from_mean((mx, my), ml)
    g = FactorGraph()
    xi, xj = g.add_variable(), g.add_variable()
    g.add_measurement(xi, xj, z)
    g.add_anchor(xj, incoming)
    exact = to_canonical(solve_dense(g)[0])
    to_i, to_j = measurement_messages(z, ZERO, incoming)
    assert close(to_i, exact, 1e-6)
    assert to_j == ZERO


def test_damp_examples():
    assert close(damp(GaussianCanonical(1, 0, 1), ZERO, 0.8), (0.2, 0, 0.2))
    g = GaussianCanonical(3, 4, 5)
    assert close(damp(g, g, 0.8), g)
    assert damp(g, ZERO, 0.0) == g
    with pytest.raises(ValueError):
        damp(g, g, 1.0)


# -- schedule and oracle ----------------------------------------------------------

def test_single_anchor_fixed_point():
    g = FactorGraph()
    v = g.add_variable()
    z = from_mean((1.5, -2), 4.0)
    g.add_anchor(v, z)
    run_sweeps(g, 200, np.random.default_rng(0))
    assert close(v.belief, z, 1e-9)


def test_chain_reaches_dense_solution():
    g = FactorGraph()
    x = [g.add_variable() for _ in range(3)]
    g.add_anchor(x[0], from_mean((0, 0), 0.01))
    g.add_measurement(x[0], x[1], from_mean((1, 0), 100))
    g.add_measurement(x[1], x[2], from_mean((1, 0), 100))
    run_sweeps(g, 500, np.random.default_rng(1))
    assert np.allclose(mean_of(x[2].belief), (2, 0), atol=1e-3)


def test_solve_dense_examples():
    g = FactorGraph()
    v = g.add_variable()
    g.add_anchor(v, from_mean((1, 2), 4))
    assert close(solve_dense(g)[0], (1, 2, 0.25))

    g = FactorGraph()
    a, b = g.add_variable(), g.add_variable()
    g.add_anchor(a, from_mean((0, 0), 100))
    g.add_measurement(a, b, from_mean((1, 1), 100))
    assert close(solve_dense(g)[1].mu, (1, 1), 1e-12)


def test_solve_dense_rejects_unanchored_component():
    g = FactorGraph()
    a, b, c = g.add_variable(), g.add_variable(), g.add_variable()
    g.add_anchor(a, from_mean((0, 0), 1))
    g.add_measurement(b, c, from_mean((1, 0), 1))
    with pytest.raises(SingularGraphError):
        solve_dense(g)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trees_are_exact(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, tree=True)
    run_sweeps(g, 10_000, rng)
    assert max_mean_error(g) <= 1e-6


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_small_loopy_graphs_converge(seed):
    rng = np.random.default_rng(seed)
    g = FactorGraph()
    x = [g.add_variable() for _ in range(5)]
    g.add_anchor(x[0], from_mean((0, 0), 1.0))
    for i, j in [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]:
        g.add_measurement(x[i], x[j], from_mean(rng.normal(size=2), float(rng.uniform(1, 10))))
    run_sweeps(g, 10_000, rng)
    assert max_mean_error(g) < 1e-3


@settings(max_examples=50)
@given(gaussians, positive, finite, finite)
def test_zero_information_message_never_raises_precision(belief, zl, zx, zy):
    g = FactorGraph()
    a, b = g.add_variable(), g.add_variable()
    f = g.add_measurement(a, b, from_mean((zx, zy), zl))
    b.belief = belief
    before = b.belief.lam
    f.send(1)  # a holds no information
    assert b.belief.lam <= before + 1e-12


def test_fixed_point_message_equals_last_sent():
    g = FactorGraph()
    a, b = g.add_variable(), g.add_variable()
    g.add_anchor(a, from_mean((1, 1), 2.0))
    f = g.add_measurement(a, b, from_mean((0.5, 0), 10.0))
    run_sweeps(g, 2000, np.random.default_rng(2))
    for side in (0, 1):
        assert close(f.compute_message(side), f.last_sent[side], 1e-9)


def test_sweep_accounting():
    g = FactorGraph()
    a, b = g.add_variable(), g.add_variable()
    g.add_anchor(a, from_mean((0, 0), 1))
    g.add_measurement(a, b, from_mean((1, 0), 1))
    g.counters = ResourceCounters()
    g.sweep(1)
    # 13 for the message pair, plus 3 per attached factor for each belief update
    assert g.counters.flops == 13 + 3 * 2 + 3 * 1
    g.counters.reset()
    g.sweep(0)
    assert g.counters.flops == 3 * 2


def test_random_sweep_needs_factors():
    with pytest.raises(ValueError):
        sweep_random_factor(FactorGraph(), np.random.default_rng(0))


def test_factor_arity_checked():
    v = VariableNode(0)
    with pytest.raises(ValueError):
        Factor(Factor.ANCHOR, from_mean((0, 0), 1), [v, v])
    with pytest.raises(ValueError):
        Factor(Factor.MEASUREMENT, from_mean((0, 0), 1), [v])
