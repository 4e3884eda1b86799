import numpy as np
import pytest

from scalemle.optimize import OptimizerSettings, bfgs


def rosenbrock(x):
    return float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)


def rosenbrock_fg(x):
    g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
    return rosenbrock(x), g


def test_rosenbrock():
    res = bfgs(rosenbrock, rosenbrock_fg, np.array([-1.2, 1.0]))
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)


def test_quadratic_exact():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([1.0, -1.0])
    f = lambda x: float(0.5 * x @ A @ x - b @ x)
    fg = lambda x: (f(x), A @ x - b)
    res = bfgs(f, fg, np.zeros(2))
    assert res.converged
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-9)
    assert res.grad_norm <= 1e-8 * (1 + abs(res.fun))


def test_history_monotone_within_noise():
    s = OptimizerSettings()
    res = bfgs(rosenbrock, rosenbrock_fg, np.array([-1.2, 1.0]), s)
    h = res.fun_history
    assert all(b <= a + s.noise(a) for a, b in zip(h, h[1:]))


def test_max_iterations_reported():
    res = bfgs(rosenbrock, rosenbrock_fg, np.array([-1.2, 1.0]), OptimizerSettings(max_iter=3))
    assert not res.converged and res.iterations == 3
    assert "maximum iterations" in res.message


def test_non_finite_regions_are_backed_off():
    # log barrier: infinite for x <= 0, minimum at x = 1
    f = lambda x: float(x[0] - np.log(x[0])) if x[0] > 0 else np.inf
    fg = lambda x: (f(x), np.array([1 - 1 / x[0]]))
    res = bfgs(f, fg, np.array([5.0]))
    assert res.converged
    assert res.x[0] == pytest.approx(1.0, abs=1e-6)


def test_line_search_failure_reported():
    # gradient points the wrong way, so no step decreases the objective
    f = lambda x: float(x @ x)
    fg = lambda x: (f(x), -2 * x)
    res = bfgs(f, fg, np.array([1.0, 1.0]), OptimizerSettings(max_halvings=5))
    assert not res.converged and res.message == "line search failed"


def test_non_finite_start():
    res = bfgs(lambda x: np.inf, lambda x: (np.inf, np.zeros(1)), np.zeros(1))
    assert not res.converged
