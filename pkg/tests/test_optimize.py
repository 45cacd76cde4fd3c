import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transport_approx.errors import NotSPDError, OptimizationError
from transport_approx.optimize import bfgs_minimize, solve_spd


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 10_000))
def test_solve_spd_matches_numpy(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    A = B @ B.T + n * np.eye(n)
    b = rng.normal(size=n)
    np.testing.assert_allclose(solve_spd(A, b), np.linalg.solve(A, b), rtol=1e-10, atol=1e-12)


def test_solve_spd_reports_pivot():
    A = np.diag([1.0, 2.0, -1.0, 4.0])
    with pytest.raises(NotSPDError) as info:
        solve_spd(A, np.ones(4))
    assert info.value.pivot == 2


def test_solve_spd_rejects_asymmetric():
    with pytest.raises(NotSPDError):
        solve_spd(np.array([[2.0, 1.0], [0.0, 2.0]]), np.ones(2))


def test_quadratic_converges_quickly():
    res = bfgs_minimize(lambda x: float((x[0] - 3) ** 2), lambda x: 2 * (x - 3), [0.0])
    assert res.converged
    assert res.x[0] == pytest.approx(3.0)
    assert res.iterations <= 3


def test_rosenbrock():
    def f(x):
        return float(100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)

    def g(x):
        return np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])

    res = bfgs_minimize(f, g, [-1.2, 1.0], tol=1e-10)
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-7)
    assert res.history[0] >= res.history[-1]
    assert set(res.to_dict()) >= {"fun", "grad_norm", "iterations", "converged", "message"}


def test_history_is_non_increasing():
    A = np.diag([1.0, 10.0, 100.0])
    res = bfgs_minimize(lambda x: float(x @ A @ x), lambda x: 2 * A @ x, [1.0, 1.0, 1.0])
    assert np.all(np.diff(res.history) <= 1e-15)


def test_iteration_limit_is_reported():
    A = np.diag(np.logspace(0, 6, 20))
    res = bfgs_minimize(lambda x: float(x @ A @ x), lambda x: 2 * A @ x, np.ones(20), max_iter=2)
    assert not res.converged
    assert res.message == "iteration limit reached"


def test_non_finite_start_raises():
    with pytest.raises(OptimizationError):
        bfgs_minimize(lambda x: float("nan"), lambda x: x, [1.0])
