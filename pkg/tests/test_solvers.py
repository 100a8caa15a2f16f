import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptsense.errors import ParameterError
from ptsense.matrix_model import gen_low_rank_slrp, numerical_rank
from ptsense.operators import DenseOperator, gen_dense, gen_piecewise_toeplitz, materialize
from ptsense.solvers import (
    SolverConfig,
    UnderdeterminedWarning,
    als_solve,
    relative_error,
    singular_value_threshold,
    solve,
    spectral_init,
    svt_solve,
)


def identity_operator(n1, n2):
    return DenseOperator(n1 * n2, n1, n2, np.eye(n1 * n2))


# --- shrinkage ---------------------------------------------------------------


def test_svt_zero_tau_is_identity(rng):
    X = rng.standard_normal((5, 4))
    np.testing.assert_allclose(singular_value_threshold(X, 0.0), X, atol=1e-12, rtol=0)


def test_svt_diagonal_by_hand():
    out = singular_value_threshold(np.diag([3.0, 1.0]), 2.0)
    np.testing.assert_allclose(out, np.diag([1.0, 0.0]), atol=1e-15)


def test_svt_at_second_singular_value_gives_rank_one(rng):
    X = rng.standard_normal((5, 4))
    s = np.linalg.svd(X, compute_uv=False)
    assert numerical_rank(singular_value_threshold(X, s[1])) == 1


def test_svt_negative_tau():
    with pytest.raises(ParameterError):
        singular_value_threshold(np.eye(2), -1.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), tau=st.floats(0, 5), m=st.integers(1, 7), n=st.integers(1, 7))
def test_shrinkage_of_singular_values(seed, tau, m, n):
    X = np.random.default_rng(seed).standard_normal((m, n))
    s = np.linalg.svd(X, compute_uv=False)
    got = np.linalg.svd(singular_value_threshold(X, tau), compute_uv=False)
    np.testing.assert_allclose(got, np.maximum(s - tau, 0.0), atol=1e-10, rtol=0)


# --- SVT solver ----------------------------------------------------------------


def test_svt_zero_measurements():
    op = gen_dense(20, 4, 4, "gaussian", seed=0)
    res = svt_solve(op, np.zeros(20))
    assert res.converged and res.iterations == 1
    assert not res.X_hat.any()
    assert len(res.residual_history) == res.iterations


def test_svt_gaussian_success_rate():
    n, M = 10, 80
    hits = 0
    for seed in range(50):
        X = gen_low_rank_slrp(n, n, 1, seed)
        op = gen_dense(M, n, n, "gaussian", seed=10_000 + seed)
        y = op.apply(X.entries)
        cfg = SolverConfig(tau=5 * math.sqrt(n * n) * np.linalg.norm(y), step=1.2, max_iters=2000)
        res = svt_solve(op, y, cfg, X_true=X.entries)
        hits += res.relative_error < 1e-3
    assert hits >= 45


def test_svt_converged_flag_matches_history():
    X = gen_low_rank_slrp(6, 6, 1, 3)
    op = gen_dense(30, 6, 6, "gaussian", seed=3)
    cfg = SolverConfig(tol=1e-6)
    res = svt_solve(op, op.apply(X.entries), cfg)
    assert res.converged
    assert res.residual_history[-1] <= cfg.tol


def test_svt_divergence_is_reported():
    X = gen_low_rank_slrp(4, 4, 1, 0)
    op = gen_dense(12, 4, 4, "gaussian", seed=0)
    res = svt_solve(op, op.apply(X.entries), SolverConfig(tau=0.0, step=50.0, max_iters=500))
    assert res.status == "diverged" and not res.converged
    assert len(res.residual_history) == res.iterations


# --- spectral init ---------------------------------------------------------------


def test_spectral_init_zero():
    op = gen_dense(10, 3, 4, "gaussian", seed=0)
    L, R = spectral_init(op, np.zeros(10), 2)
    assert L.shape == (3, 2) and R.shape == (4, 2)
    assert not L.any() and not R.any()


def test_spectral_init_identity_operator(rng):
    X = rng.standard_normal((4, 5))
    op = identity_operator(4, 5)
    np.testing.assert_array_equal(op.adjoint(op.apply(X)), X)
    L, R = spectral_init(op, op.apply(X), 2)
    U, s, Vt = np.linalg.svd(X)
    best = (U[:, :2] * s[:2]) @ Vt[:2]
    np.testing.assert_allclose(L @ R.T, best, atol=1e-12)


def test_spectral_init_rank_range():
    op = gen_dense(10, 3, 4, "gaussian", seed=0)
    for bad in (0, 4):
        with pytest.raises(ParameterError):
            spectral_init(op, np.ones(10), bad)


# --- ALS -------------------------------------------------------------------------


def test_als_zero_measurements():
    op = gen_dense(20, 3, 3, "gaussian", seed=1)
    res = als_solve(op, op.apply(np.zeros((3, 3))), SolverConfig(rank=1))
    assert not res.X_hat.any() and res.converged


def test_als_requires_rank():
    op = gen_dense(20, 3, 3, "gaussian", seed=1)
    with pytest.raises(ParameterError):
        als_solve(op, np.ones(20), SolverConfig())
    with pytest.raises(ParameterError):
        solve("newton", op, np.ones(20), SolverConfig())


def test_als_gaussian_success_rate():
    n, M = 10, 120
    hits = 0
    for seed in range(50):
        X = gen_low_rank_slrp(n, n, 2, seed)
        op = gen_dense(M, n, n, "gaussian", seed=20_000 + seed)
        res = als_solve(op, op.apply(X.entries), SolverConfig(rank=2, max_iters=200), X.entries)
        hits += res.relative_error < 1e-6
    assert hits >= 45


@pytest.mark.parametrize("kind", ["gaussian", "piecewise_toeplitz"])
def test_als_residual_is_monotone(kind):
    from ptsense.operators import gen_operator

    for seed in range(8):
        X = gen_low_rank_slrp(8, 8, 3, seed)
        op = gen_operator(kind, 45, 8, 8, seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnderdeterminedWarning)
            res = als_solve(op, op.apply(X.entries), SolverConfig(rank=3, max_iters=60))
        h = res.residual_history
        assert len(h) == res.iterations
        assert np.all(np.diff(h) <= 1e-12)


def test_als_warns_when_underdetermined():
    X = gen_low_rank_slrp(5, 5, 2, 0)
    op = gen_dense(12, 5, 5, "gaussian", seed=0)
    with pytest.warns(UnderdeterminedWarning):
        als_solve(op, op.apply(X.entries), SolverConfig(rank=2, max_iters=5))


def test_als_survives_singular_normal_equations():
    # every measurement ignores column 0, so the left subproblem is singular without ridge
    rows = np.random.default_rng(0).standard_normal((30, 9))
    rows[:, [0, 3, 6]] = 0.0
    op = DenseOperator(30, 3, 3, rows)
    X = gen_low_rank_slrp(3, 3, 1, 0)
    res = als_solve(op, op.apply(X.entries), SolverConfig(rank=1, als_reg=0.0, max_iters=20))
    assert np.all(np.isfinite(res.X_hat))


@pytest.mark.parametrize("solver", ["svt", "als"])
def test_toeplitz_and_materialized_agree(solver, backend):
    X = gen_low_rank_slrp(6, 6, 1, 5)
    op = gen_piecewise_toeplitz(24, 6, 6, seed=5)
    dense = materialize(op)
    cfg = SolverConfig(rank=1, max_iters=300)
    a = solve(solver, op, op.apply(X.entries), cfg)
    b = solve(solver, dense, dense.apply(X.entries), cfg)
    assert relative_error(a.X_hat, b.X_hat) <= 1e-8


@pytest.mark.parametrize("solver", ["svt", "als"])
def test_exact_at_full_sampling(solver):
    n = 6
    X = gen_low_rank_slrp(n, n, 2, 7)
    op = gen_dense(n * n, n, n, "gaussian", seed=7)
    cfg = SolverConfig(rank=2, tol=1e-10)
    res = solve(solver, op, op.apply(X.entries), cfg, X_true=X.entries)
    assert res.relative_error < 1e-6


# --- metric ---------------------------------------------------------------------


def test_relative_error_cases(rng):
    X = rng.standard_normal((3, 4))
    assert relative_error(X, X) == 0.0
    assert relative_error(np.zeros_like(X), X) == 1.0
    assert abs(relative_error(1.1 * X, X) - 0.1) <= 1e-15
    assert relative_error(np.zeros((2, 2)), np.zeros((2, 2))) == 0.0
    with pytest.raises(ParameterError):
        relative_error(np.zeros((2, 2)), np.zeros((2, 3)))


def test_config_validation():
    for bad in ({"max_iters": 0}, {"tol": 0}, {"step": -1}, {"als_reg": -1e-3}, {"tau": -1}):
        with pytest.raises(ParameterError):
            SolverConfig(**bad)
