"""GMRES on complex vectors treated as a real Hilbert space."""

import math

import numpy as np
import pytest

from nudgeflow.krylov import SolveResult, gmres


def _mat_op(a):
    return lambda x: a @ x


def test_diagonal_system_matches_closed_form(rng):
    d = rng.uniform(1.0, 5.0, size=64)
    b = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    res = gmres(lambda x: d * x, b, rel_tol=1e-12)
    assert res.converged
    assert np.linalg.norm(res.x - b / d) <= 1e-10 * np.linalg.norm(b / d)
    assert res.residual <= 1e-12


def test_nonsymmetric_dense_system(rng):
    # perturbation scaled by 1/sqrt(n) keeps the field of values coercive
    n = 40
    a = np.eye(n) + 0.3 / math.sqrt(n) * rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    res = gmres(_mat_op(a), b.astype(complex), rel_tol=1e-11, restart=20)
    assert res.converged
    exact = np.linalg.solve(a, b)
    assert np.linalg.norm(res.x - exact) <= 1e-8 * np.linalg.norm(exact)


def test_reported_residual_is_true_residual(rng):
    n = 30
    a = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    b = (rng.standard_normal(n) + 1j * rng.standard_normal(n)).astype(complex)
    res = gmres(_mat_op(a), b, rel_tol=1e-10)
    true_rel = np.linalg.norm(b - a @ res.x) / np.linalg.norm(b)
    assert res.residual == pytest.approx(true_rel, rel=1e-6, abs=1e-13)


def test_exact_right_preconditioner_converges_immediately(rng):
    d = rng.uniform(1.0, 100.0, size=128)
    b = rng.standard_normal(128).astype(complex)
    res = gmres(lambda x: d * x, b, apply_precond=lambda y: y / d, rel_tol=1e-12)
    assert res.converged
    assert res.iterations <= 2


def test_preconditioner_preserves_solution(rng):
    n = 32
    a = np.diag(rng.uniform(1.0, 50.0, size=n)) + 0.1 * rng.standard_normal((n, n))
    m_inv = np.diag(1.0 / np.diag(a))
    b = rng.standard_normal(n).astype(complex)
    plain = gmres(_mat_op(a), b, rel_tol=1e-11)
    pre = gmres(_mat_op(a), b, apply_precond=_mat_op(m_inv), rel_tol=1e-11)
    assert plain.converged and pre.converged
    assert np.linalg.norm(plain.x - pre.x) <= 1e-7 * np.linalg.norm(plain.x)
    assert pre.iterations <= plain.iterations


def test_unconverged_run_reports_failure(rng):
    n = 50
    a = np.eye(n) + 0.5 * rng.standard_normal((n, n))
    b = rng.standard_normal(n).astype(complex)
    res = gmres(_mat_op(a), b, rel_tol=1e-14, max_iter=3)
    assert isinstance(res, SolveResult)
    assert not res.converged
    assert res.iterations <= 3
    assert res.residual > 1e-14


def test_zero_rhs_short_circuits():
    res = gmres(lambda x: 2.0 * x, np.zeros(8, dtype=complex))
    assert res.converged
    assert res.iterations == 0
    assert np.all(res.x == 0)


def test_warm_start_reduces_work(rng):
    d = rng.uniform(1.0, 10.0, size=64)
    b = rng.standard_normal(64).astype(complex)
    exact = b / d
    cold = gmres(lambda x: d * x, b, rel_tol=1e-12)
    warm = gmres(lambda x: d * x, b, x0=exact.copy(), rel_tol=1e-12)
    assert warm.converged
    assert warm.iterations == 0
    assert warm.iterations <= cold.iterations


def test_restart_still_converges(rng):
    n = 60
    a = np.eye(n) + 0.3 / math.sqrt(n) * rng.standard_normal((n, n))
    b = rng.standard_normal(n).astype(complex)
    res = gmres(_mat_op(a), b, restart=7, rel_tol=1e-10, max_iter=600)
    assert res.converged
    exact = np.linalg.solve(a, b)
    assert np.linalg.norm(res.x - exact) <= 1e-7 * np.linalg.norm(exact)


def test_history_tracks_progress(rng):
    d = rng.uniform(1.0, 4.0, size=32)
    b = rng.standard_normal(32).astype(complex)
    res = gmres(lambda x: d * x, b, rel_tol=1e-12)
    assert res.history[0] == pytest.approx(1.0)
    assert res.history[-1] <= 1e-12


def test_hermitian_symmetry_is_preserved(rng):
    # operators acting mode-wise with even symbols keep conjugate symmetry;
    # the real inner product must not leak an imaginary part into iterates
    n = 16
    sym = rng.uniform(1.0, 3.0, size=n)
    sym = 0.5 * (sym + sym[::-1])

    def op(x):
        return sym * x

    raw = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    b = 0.5 * (raw + np.conj(raw[::-1]))  # b_k = conj(b_{-k}) pattern
    res = gmres(op, b, rel_tol=1e-12)
    assert res.converged
    drift = np.max(np.abs(res.x - np.conj(res.x[::-1])))
    assert drift <= 1e-12 * np.max(np.abs(res.x))
