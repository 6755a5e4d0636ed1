import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from cfbalance.balance import (
    BalanceConfig,
    Norm,
    balance_gradient,
    balance_objective,
    balance_report,
    simplex_project,
    solve_weights,
)
from cfbalance.data import TargetMoments
from cfbalance.errors import DimensionMismatch, NotConvergedWarning

L2 = BalanceConfig(norm=Norm.L2)
LINF = BalanceConfig(norm=Norm.LINF)


def _instance(seed, n, d, shift=0.5):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d)) + shift
    xbar = rng.standard_normal(d) * 0.3
    return X, xbar


def _feasible(w):
    return abs(w.sum() - 1) < 1e-9 and w.min() >= 0


def test_config_validation():
    for bad in (dict(xi=0.0), dict(xi=1.0), dict(tolerance=0.0), dict(max_iterations=0)):
        with pytest.raises(ValueError):
            BalanceConfig(**bad)
    assert BalanceConfig().xi == 0.5 and BalanceConfig().norm is Norm.LINF


@pytest.mark.parametrize("cfg", [L2, LINF])
def test_single_row(cfg):
    res = solve_weights(np.array([[3.0, -2.0]]), TargetMoments(np.zeros(2)), cfg)
    np.testing.assert_array_equal(res.weights, [1.0])


@pytest.mark.parametrize("cfg", [L2, LINF])
def test_identical_rows_at_target(cfg):
    row = np.array([0.3, -1.2, 2.0])
    X = np.tile(row, (7, 1))
    res = solve_weights(X, row, cfg)
    np.testing.assert_allclose(res.weights, np.full(7, 1 / 7), atol=1e-9)
    assert res.achieved_imbalance < 1e-9


def test_three_points_against_grid():
    X = np.array([[0.0], [1.0], [2.0]])
    res = solve_weights(X, [1.0], L2)
    w_grid, _ = oracles.grid_minimize(X, np.array([1.0]), 0.5, "l2", 1e-3)
    np.testing.assert_allclose(res.weights, w_grid, atol=2e-3)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_one_dimension_norms_coincide(seed, n):
    X, xbar = _instance(seed, n, 1)
    a = solve_weights(X, xbar, L2)
    b = solve_weights(X, xbar, LINF)
    assert abs(a.objective_value - b.objective_value) < 1e-7
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-4)


@pytest.mark.parametrize("norm", ["l2", "linf"])
@pytest.mark.parametrize("seed", range(25))
def test_small_instances_against_grid(norm, seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    X, xbar = _instance(seed, n, d)
    res = solve_weights(X, xbar, BalanceConfig(norm=norm))
    _, f_grid = oracles.grid_minimize(X, xbar, 0.5, norm, 1e-2 if n == 3 else 1e-3)
    assert _feasible(res.weights)
    assert res.objective_value <= f_grid + 2e-3


@pytest.mark.parametrize("seed", range(5))
def test_r2_projected_gradient_fixed_point(seed):
    X, xbar = _instance(seed, 60, 8)
    res = solve_weights(X, xbar, L2)
    assert res.converged
    Lg = 2 * 0.5 + 2 * 0.5 * np.linalg.norm(X, 2) ** 2
    w = res.weights
    step = simplex_project(w - balance_gradient(w, X, xbar, 0.5) / Lg)
    assert np.max(np.abs(step - w)) < 1e-6


@pytest.mark.parametrize("norm", [Norm.L2, Norm.LINF])
@pytest.mark.parametrize("seed", range(4))
def test_history_non_increasing_and_objective_recomputes(norm, seed):
    X, xbar = _instance(seed, 40, 12)
    res = solve_weights(X, xbar, BalanceConfig(norm=norm))
    assert np.all(np.diff(res.history) <= 0)
    ref = oracles.balance_objective(res.weights, X, xbar, 0.5, norm.value)
    assert abs(ref - res.objective_value) < 1e-9


@pytest.mark.parametrize("norm", [Norm.L2, Norm.LINF])
@pytest.mark.parametrize("seed", range(6))
def test_beats_uniform_and_imbalance_bound(norm, seed):
    n, d = [(1, 3), (5, 50), (30, 4), (120, 20), (2, 2), (200, 100)][seed]
    X, xbar = _instance(seed, n, d)
    cfg = BalanceConfig(norm=norm)
    res = solve_weights(X, xbar, cfg)
    u = np.full(n, 1 / n)
    assert _feasible(res.weights)
    rep = balance_report(res, X, xbar, norm)
    improved = res.objective_value < balance_objective(u, X, xbar, cfg)
    assert rep.after <= rep.before + 1e-9 or improved


def test_linf_matches_reference_optimum():
    # reference obtained by an interior-point QP on the epigraph form
    X, xbar = _instance(3, 25, 6)
    res = solve_weights(X, xbar, LINF)
    cvxpy = pytest.importorskip("cvxpy")
    w = cvxpy.Variable(25)
    t = cvxpy.Variable()
    v = xbar - X.T @ w
    prob = cvxpy.Problem(
        cvxpy.Minimize(0.5 * cvxpy.sum_squares(w) + 0.5 * cvxpy.square(t)),
        [w >= 0, cvxpy.sum(w) == 1, v <= t, -v <= t],
    )
    prob.solve(solver="CLARABEL")
    assert res.objective_value <= prob.value * (1 + 1e-5)


def test_non_convergence_warns_and_returns_best():
    X, xbar = _instance(0, 80, 30)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = solve_weights(X, xbar, BalanceConfig(norm=Norm.LINF, max_iterations=3))
    assert not res.converged
    assert any(issubclass(w.category, NotConvergedWarning) for w in caught)
    assert _feasible(res.weights)
    assert res.objective_value <= balance_objective(np.full(80, 1 / 80), X, xbar, LINF)


def test_objective_closed_forms():
    row = np.array([1.0, 2.0])
    X = np.tile(row, (4, 1))
    assert balance_objective(np.full(4, 0.25), X, row, L2) == pytest.approx(0.5 / 4, abs=1e-15)
    X, xbar = _instance(1, 5, 3)
    for k in range(5):
        e = np.eye(5)[k]
        for cfg, r in ((L2, 2), (LINF, np.inf)):
            expected = 0.5 + 0.5 * np.linalg.norm(xbar - X[k], r) ** 2
            assert balance_objective(e, X, xbar, cfg) == pytest.approx(expected, rel=1e-13)


@given(st.integers(0, 2**32 - 1), st.sampled_from(["l2", "linf"]))
def test_objective_matches_reimplementation(seed, norm):
    X, xbar = _instance(seed, 6, 4)
    w = np.random.default_rng(seed + 1).dirichlet(np.ones(6))
    ref = oracles.balance_objective(w, X, xbar, 0.3, norm)
    assert abs(balance_objective(w, X, xbar, BalanceConfig(xi=0.3, norm=norm)) - ref) < 1e-12


def test_objective_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        balance_objective(np.ones(3) / 3, np.zeros((3, 2)), np.zeros(3), L2)
    with pytest.raises(DimensionMismatch):
        balance_objective(np.ones(2) / 2, np.zeros((3, 2)), np.zeros(2), L2)


@pytest.mark.parametrize("seed", range(100))
def test_r2_gradient_finite_difference(seed):
    X, xbar = _instance(seed, 7, 5)
    w = np.random.default_rng(seed).dirichlet(np.ones(7))
    g = balance_gradient(w, X, xbar, 0.5)
    fd = oracles.central_difference(lambda v: oracles.balance_objective(v, X, xbar, 0.5, "l2"), w)
    np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-4 * np.abs(g).max())


def test_projection_examples():
    v = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(simplex_project(v), v, atol=1e-15)
    np.testing.assert_array_equal(simplex_project(np.array([10.0, 0.0, 0.0])), [1, 0, 0])


@pytest.mark.parametrize("seed", range(30))
def test_projection_active_set_oracle(seed):
    v = np.random.default_rng(seed).standard_normal(5) * 2
    np.testing.assert_allclose(simplex_project(v), oracles.simplex_project_active_set(v), atol=1e-8)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
def test_projection_feasible(vals):
    w = simplex_project(np.array(vals))
    assert abs(w.sum() - 1) < 1e-12 * max(1, len(vals)) and w.min() >= 0


@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 6), st.sampled_from(["l2", "linf"]))
def test_solver_feasible(seed, n, d, norm):
    X, xbar = _instance(seed, n, d)
    res = solve_weights(X, xbar, BalanceConfig(norm=norm))
    assert _feasible(res.weights)
    assert res.weights.max() <= 1.0
    rep = balance_report(res, X, xbar, norm, weight_cap=1.0)
    assert not rep.exceeds_cap


def test_report_identical_rows():
    X = np.tile([1.0, -2.0], (4, 1))
    rep = balance_report(np.full(4, 0.25), X, [0.5, 0.5])
    np.testing.assert_allclose(rep.imbalance_before, [-0.5, 2.5])
    np.testing.assert_allclose(rep.imbalance_after, [-0.5, 2.5])


@given(st.integers(0, 2**32 - 1))
def test_report_aggregates(seed):
    X, xbar = _instance(seed, 9, 4)
    w = np.random.default_rng(seed).dirichlet(np.ones(9))
    rep = balance_report(w, X, xbar, Norm.L2, weight_cap=0.2)
    assert abs(rep.l2_after - np.sqrt(np.sum(rep.imbalance_after**2))) < 1e-12
    assert abs(rep.linf_after - np.abs(rep.imbalance_after).max()) < 1e-12
    assert abs(rep.l2_before - np.linalg.norm(xbar - X.mean(axis=0))) < 1e-12
    assert rep.exceeds_cap == bool(np.any(w > 0.2))


def test_report_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        balance_report(np.ones(2) / 2, np.zeros((3, 2)), np.zeros(2))
