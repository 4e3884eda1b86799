"""Independent reference computations shared by the tests."""
import numpy as np

from scalemle.special_math import gk15_panels


def quadrature_cdf(fam, x):
    """CDF of a symmetric unit-scale density at the points ``x``.

    Integrates the density panel by panel between consecutive sorted |x|
    with one 15-point Kronrod rule per panel and accumulates.
    """
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    order = np.argsort(a)
    edges = np.concatenate([[0.0], a[order]])
    pieces = gk15_panels(fam.pdf, edges)
    half = np.empty_like(a)
    half[order] = np.cumsum(pieces)
    return 0.5 + np.sign(x) * half


def ks_distance(fam, draws):
    """Two-sided Kolmogorov-Smirnov statistic of unit-scale draws."""
    xs = np.sort(np.asarray(draws, dtype=float))
    cdf = quadrature_cdf(fam, xs)
    n = xs.size
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def nll_fd_steps(X, y, theta, rel_step=1e-6):
    """Per-coordinate steps for differencing the negative log-likelihood.

    The beta steps are capped so no residual can move by more than 0.1% of
    the smallest residual magnitude; densities with a kink or cusp at zero
    are then differenced on a single smooth piece.
    """
    d = X.shape[1]
    steps = rel_step * (1.0 + np.abs(theta))
    rmin = np.min(np.abs(y - X @ theta[:d]))
    cap = 1e-3 * rmin / np.maximum(np.max(np.abs(X), axis=0), 1e-300)
    steps[:d] = np.minimum(steps[:d], cap)
    return steps


def central_gradient(fun, x, rel_step=1e-6, steps=None):
    """Five-point central differences (fourth order)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i])) if steps is None else steps[i]
        vals = []
        for m in (2, 1, -1, -2):
            xs = x.copy()
            xs[i] += m * h
            vals.append(fun(xs))
        g[i] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
    return g


def asymptotic_win_probability(params, eta, draws=400_000, seed=0):
    """P(||e_mle|| <= ||e_ols||) under the joint Gaussian limit of both estimators.

    Both errors have covariance proportional to Sigma = E[XX^T]^{-1}; the
    efficient estimator is uncorrelated with the difference OLS - MLE, so
    e_ols = e_mle + delta with delta independent of e_mle.
    """
    exx = np.outer(params.mu_x, params.mu_x) + np.diag(params.sigma_x ** 2)
    L = np.linalg.cholesky(np.linalg.inv(exx))
    rng = np.random.default_rng(seed)
    d = L.shape[0]
    e_mle = np.sqrt(eta) * rng.standard_normal((draws, d)) @ L.T
    e_ols = e_mle + np.sqrt(1 - eta) * rng.standard_normal((draws, d)) @ L.T
    return float(np.mean(np.linalg.norm(e_mle, axis=1) <= np.linalg.norm(e_ols, axis=1)))
