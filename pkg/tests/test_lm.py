import numpy as np
import pytest

from epe.errors import ConvergenceError, RankDeficiencyError
from epe.lm import levenberg_marquardt


def test_rosenbrock_residuals_converge_to_minimum():
    res = levenberg_marquardt(
        lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]]),
        lambda x: np.array([[-20 * x[0], 10.0], [-1.0, 0.0]]),
        [-1.2, 1.0],
    )
    assert res.converged and np.allclose(res.x, [1.0, 1.0], atol=1e-6)


def test_linear_problem_matches_least_squares_and_covariance():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 3))
    y = X @ [1.0, -2.0, 0.5] + rng.normal(0, 0.1, 200)
    res = levenberg_marquardt(lambda b: X @ b - y, lambda b: X, np.zeros(3))
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    assert np.allclose(res.x, coef, atol=1e-8)
    r = X @ coef - y
    cov = r @ r / (200 - 3) * np.linalg.inv(X.T @ X)
    assert np.allclose(res.covariance(), cov, rtol=1e-6)


def test_iteration_limit_raises_or_reports():
    f = lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])  # noqa: E731
    j = lambda x: np.array([[-20 * x[0], 10.0], [-1.0, 0.0]])  # noqa: E731
    with pytest.raises(ConvergenceError):
        levenberg_marquardt(f, j, [-1.2, 1.0], max_iter=2)
    res = levenberg_marquardt(f, j, [-1.2, 1.0], max_iter=2, raise_on_failure=False)
    assert not res.converged and res.iterations == 2


def test_projection_clamps_and_flags():
    # unconstrained optimum at 2, feasible set x <= 1
    res = levenberg_marquardt(lambda x: x - 2.0, lambda x: np.eye(1), [0.0],
                              project=lambda x: (np.minimum(x, 1.0), bool(x[0] > 1.0)), raise_on_failure=False)
    assert res.x[0] == pytest.approx(1.0) and res.clamped


def test_singular_covariance_detected():
    X = np.column_stack([np.arange(10.0), 2 * np.arange(10.0)])
    y = np.arange(10.0) + 0.1 * np.sin(np.arange(10.0))
    res = levenberg_marquardt(lambda b: X @ b - y, lambda b: X, np.zeros(2), raise_on_failure=False)
    with pytest.raises(RankDeficiencyError):
        res.covariance()
