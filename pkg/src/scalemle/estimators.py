"""Least squares and joint maximum-likelihood estimation of (beta, s)."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from . import _kernels
from .asymptotics import fisher_blocks, mle_asymptotic_cov
from .errors import (DataError, DegenerateDataError, DomainError,
                     EfficiencyUndefinedError, SingularDesignError)
from .families import NoiseFamily
from .optimize import OptimizeResult, OptimizerSettings, bfgs

logger = logging.getLogger(__name__)

__all__ = [
    "Dataset",
    "FitResult",
    "FeasibleRegion",
    "ols_fit",
    "negative_loglik",
    "negative_loglik_gradient",
    "mle_fit",
    "feasible_region",
]

RANK_TOL = 1e-10


@dataclass(frozen=True)
class Dataset:
    """Design matrix (rows are covariate vectors) and response.

    ``x_means``/``y_mean`` record the centering applied by the data pipeline
    so predictions can be mapped back to the original response scale.
    """

    design: np.ndarray
    response: np.ndarray
    centered: bool = False
    columns: Optional[tuple] = None
    x_means: Optional[np.ndarray] = None
    y_mean: Optional[float] = None
    response_exponent: Optional[float] = None

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.response, dtype=float).ravel()
        if X.ndim != 2:
            raise DataError("design must be a 2-D array")
        n, d = X.shape
        if y.shape[0] != n:
            raise DataError(f"response has {y.shape[0]} rows, design has {n}")
        if d < 1 or n < d + 1:
            raise DataError(f"need n >= d + 1 observations, got n={n}, d={d}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("design and response must be finite")
        if self.columns is not None and len(self.columns) != d:
            raise DataError("one column name per design column is required")
        X = np.ascontiguousarray(X)
        X.setflags(write=False)
        y = np.ascontiguousarray(y)
        y.setflags(write=False)
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def d(self) -> int:
        return self.design.shape[1]

    def gram(self) -> np.ndarray:
        """Empirical E[XX^T] = X^T X / n."""
        return self.design.T @ self.design / self.n

    def column_name(self, j: int) -> str:
        return self.columns[j] if self.columns is not None else f"x{j}"

    def check_rank(self) -> None:
        """Raise :class:`SingularDesignError` unless the design has full column rank."""
        X = self.design
        _, sv, vt = np.linalg.svd(X, full_matrices=False)
        if sv[-1] > RANK_TOL * sv[0]:
            return
        zero_cols = [self.column_name(j) for j in range(self.d) if not np.any(X[:, j])]
        if zero_cols:
            detail = "all-zero column(s): " + ", ".join(zero_cols)
        else:
            null = vt[-1]
            involved = [self.column_name(j) for j in np.argsort(-np.abs(null))
                        if abs(null[j]) > 1e-3]
            detail = "near-collinear columns: " + ", ".join(involved)
        raise SingularDesignError(f"design matrix is rank deficient ({detail})")

    def canonical(self) -> "Dataset":
        """Rows sorted lexicographically by (response, covariates).

        Fits run on this ordering so their floating-point results do not
        depend on the order in which observations were supplied.
        """
        keys = np.column_stack([self.design, self.response]).T[::-1]
        order = np.lexsort(keys)
        if np.all(order[1:] > order[:-1]):
            return self
        return self.subset(order)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.design[idx], self.response[idx], self.centered, self.columns,
                       self.x_means, self.y_mean, self.response_exponent)


@dataclass
class FitResult:
    method: str
    beta_hat: np.ndarray
    s_hat: Optional[float]
    loglik: Optional[float]
    converged: bool
    iterations: int
    gradient_norm: float
    asymptotic_cov: Optional[np.ndarray]
    family: Optional[NoiseFamily] = None
    message: str = ""
    fun_history: list = field(default_factory=list, repr=False)

    @property
    def standard_errors(self) -> Optional[np.ndarray]:
        if self.asymptotic_cov is None:
            return None
        return np.sqrt(np.diag(self.asymptotic_cov))

    def residuals(self, data: Dataset) -> np.ndarray:
        return data.response - data.design @ self.beta_hat

    def as_dict(self) -> dict:
        se = self.standard_errors
        return {
            "method": self.method,
            "family": None if self.family is None else self.family.family,
            "gamma": None if self.family is None else self.family.gamma,
            "beta_hat": self.beta_hat.tolist(),
            "s_hat": self.s_hat,
            "standard_errors": None if se is None else se.tolist(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "message": self.message,
        }


def ols_fit(data: Dataset) -> FitResult:
    """Least squares through a QR factorization of the design.

    ``s_hat`` is the residual standard deviation with divisor ``n - d``;
    the covariance is ``s_hat^2 (X^T X)^{-1}``.
    """
    data.check_rank()
    return _ols(data.canonical())


def _ols(data: Dataset) -> FitResult:
    X, y = data.design, data.response
    n, d = X.shape
    q, r = np.linalg.qr(X, mode="reduced")
    beta = solve_triangular(r, q.T @ y, lower=False)
    resid = y - X @ beta
    sigma2 = float(resid @ resid) / (n - d)
    r_inv = solve_triangular(r, np.eye(d), lower=False)
    cov = sigma2 * (r_inv @ r_inv.T)
    return FitResult("ols", beta, math.sqrt(sigma2), None, True, 0, 0.0, cov)


def _family_args(fam: NoiseFamily):
    return fam.family, fam.gamma, fam.log_c, fam.log_d


def negative_loglik(data: Dataset, fam: NoiseFamily, beta, log_s: float) -> float:
    """n log s - sum_i log f((Y_i - beta^T X_i) / s)."""
    beta = np.ascontiguousarray(beta, dtype=float)
    return _kernels.nll_value(data.design, data.response, beta, log_s, *_family_args(fam))


def negative_loglik_gradient(data: Dataset, fam: NoiseFamily, beta, log_s: float) -> np.ndarray:
    """Gradient of :func:`negative_loglik` in (beta, log s)."""
    beta = np.ascontiguousarray(beta, dtype=float)
    _, grad = _kernels.nll_and_grad(data.design, data.response, beta, log_s, *_family_args(fam))
    return grad


def _check_not_degenerate(data: Dataset, resid: np.ndarray) -> None:
    scale = max(float(np.max(np.abs(data.response))), 1.0)
    if float(np.max(np.abs(resid))) <= 1e-12 * scale:
        raise DegenerateDataError(
            "response is an exact linear function of the covariates; "
            "the likelihood is unbounded as s -> 0"
        )


def mle_fit(data: Dataset, fam: NoiseFamily,
            options: OptimizerSettings = OptimizerSettings()) -> FitResult:
    """Joint MLE of (beta, s) by BFGS over (beta, log s), started at OLS.

    The starting scale ``s0`` is the sample standard deviation of the OLS
    residuals.  The optimizer works on the response divided by ``s0``, so
    ``gradient_norm`` and ``fun_history`` refer to that standardized
    problem and the fit is exactly equivariant under rescaling of Y.
    Non-convergence is reported through ``converged=False``.

    When the log-density has a kink at zero (family 1 with gamma <= 1, or
    gamma = 1 in families 2 and 3) the maximizer typically makes some
    residuals exactly zero, where no gradient exists.  If BFGS stalls there,
    :func:`_polish_on_kinks` finishes the job and ``gradient_norm`` then
    reports the smallest element of the subdifferential.

    In families 2 and 3 with gamma > 1 the density vanishes at zero, so
    every hyperplane ``Y_i = beta^T X_i`` is an infinite barrier and the
    likelihood has one local maximum per cell.  :func:`_search_cells`
    then looks beyond the cell of the OLS start.  ``iterations`` counts
    all BFGS iterations spent; ``fun_history`` is the path of the run
    that produced the returned point.
    """
    data.check_rank()
    data = data.canonical()
    ols = _ols(data)
    resid = ols.residuals(data)
    _check_not_degenerate(data, resid)
    s0 = float(np.std(resid, ddof=1))
    # optimize on Y / s0 so the problem (and the BFGS path) is scale free
    work = Dataset(data.design, data.response / s0)
    x0 = np.append(ols.beta_hat / s0, 0.0)
    X, y = work.design, work.response
    args = _family_args(fam)
    d = data.d

    def fun(theta):
        return _kernels.nll_value(X, y, theta[:d], theta[d], *args)

    def fun_and_grad(theta):
        return _kernels.nll_and_grad(X, y, theta[:d], theta[d], *args)

    res = bfgs(fun, fun_and_grad, x0, options)
    if has_barriers(fam):
        res = _search_cells(work, fam, x0, res, options)
    if not res.converged and is_kinked(fam):
        polished = _polish_on_kinks(work, fam, res, options)
        if polished is not None:
            res = polished
    beta_hat = s0 * res.x[:d]
    s_hat = s0 * math.exp(res.x[d])
    loglik = -(res.fun + data.n * math.log(s0))
    try:
        cov = mle_asymptotic_cov(fisher_blocks(fam, s_hat, data.gram()), data.n)
    except EfficiencyUndefinedError:
        cov = None
    return FitResult("mle", beta_hat, s_hat, loglik, res.converged, res.iterations,
                     res.grad_norm, cov, fam, res.message, res.fun_history)


SMOOTHING_SCHEDULE = (1.0, 0.3, 0.1, 0.03, 0.01)
HOP_CANDIDATES = 8
MAX_HOPS = 20


def has_barriers(fam: NoiseFamily) -> bool:
    """True when log f is -inf at 0, splitting the parameter space into cells."""
    return fam.family in (2, 3) and fam.gamma > 1.0


def _better(a: OptimizeResult, b: OptimizeResult) -> bool:
    """Is ``a`` preferable to ``b``: converged first, then strictly lower objective."""
    if a.converged != b.converged:
        return a.converged
    return a.fun < b.fun - 1e-12 * (1.0 + abs(b.fun))


def _search_cells(data: Dataset, fam: NoiseFamily, x0, res: OptimizeResult,
                  options: OptimizerSettings) -> OptimizeResult:
    """Global search over the cells cut out by the zero-residual barriers.

    Stage 1 follows the minimizer of a smoothed objective (see
    ``_kernels.smoothed_nll_and_grad``) as the smoothing width shrinks
    along ``SMOOTHING_SCHEDULE``, then finishes on the exact objective;
    the better of this and the plain run ``res`` is kept.  Stage 2 hops
    to neighbouring cells: the current point is mirrored across each of
    the ``HOP_CANDIDATES`` nearest barriers and BFGS restarted there; the
    first strict improvement is accepted and the hop repeated.
    """
    X, y = data.design, data.response
    d = data.d
    args = _family_args(fam)

    def fun(theta):
        return _kernels.nll_value(X, y, theta[:d], theta[d], *args)

    def fun_and_grad(theta):
        return _kernels.nll_and_grad(X, y, theta[:d], theta[d], *args)

    iters = res.iterations
    x = np.array(x0, dtype=float)
    for eps in SMOOTHING_SCHEDULE:
        def smooth_fg(theta, eps=eps):
            return _kernels.smoothed_nll_and_grad(X, y, theta[:d], theta[d], fam.family,
                                                  fam.gamma, fam.log_c, eps)
        stage = bfgs(lambda theta: smooth_fg(theta)[0], smooth_fg, x, options)
        iters += stage.iterations
        if np.all(np.isfinite(stage.x)):
            x = stage.x
    cont = bfgs(fun, fun_and_grad, x, options)
    iters += cont.iterations
    best = cont if _better(cont, res) else res

    for _ in range(MAX_HOPS if best.converged else 0):
        beta = best.x[:d]
        r = y - X @ beta
        improved = False
        for i in np.argsort(np.abs(r), kind="stable")[:HOP_CANDIDATES]:
            start = best.x.copy()
            start[:d] = beta + 2.0 * r[i] * X[i] / float(X[i] @ X[i])
            cand = bfgs(fun, fun_and_grad, start, options)
            iters += cand.iterations
            if cand.converged and _better(cand, best):
                best, improved = cand, True
                break
        if not improved:
            break
    best.iterations = iters
    return best


def is_kinked(fam: NoiseFamily) -> bool:
    """True when log f is not differentiable at 0."""
    return fam.gamma == 1.0 or (fam.family == 1 and fam.gamma < 1.0)


def _polish_on_kinks(data: Dataset, fam: NoiseFamily, res, options: OptimizerSettings):
    """Active-set finish for likelihoods with a kink at zero residual.

    For k = d, d-1, ..., 1 the k smallest residuals at the BFGS end point are pinned
    to zero and the smooth remainder is minimized over the null space of
    those rows (plus log s).  A candidate is accepted when it is stationary
    in the generalized sense: the reduced gradient vanishes and, for
    gamma = 1, the multipliers of the pinned rows lie in [-c, c] (for
    gamma < 1 the subdifferential at a zero residual is unbounded).  The
    first accepted candidate is returned (for gamma = 1 the problem is
    convex, so it is a global minimizer); ``None`` if none is accepted.
    """
    X, y = data.design, data.response
    n, d = X.shape
    args = _family_args(fam)
    log_d = fam.log_d
    beta0, ls0 = res.x[:d], res.x[d]
    order = np.argsort(np.abs(y - X @ beta0))
    iters = res.iterations
    for k in range(d, 0, -1):
        act = order[:k]
        XA, yA = X[act], y[act]
        _, sv, vt = np.linalg.svd(XA, full_matrices=True)
        if sv[-1] <= RANK_TOL * sv[0]:
            continue
        beta_p = beta0 - np.linalg.lstsq(XA, XA @ beta0 - yA, rcond=None)[0]
        N = vt[k:].T
        keep = np.ones(n, dtype=bool)
        keep[act] = False
        Xr, yr = np.ascontiguousarray(X[keep]), np.ascontiguousarray(y[keep])

        def unpack(w, beta_p=beta_p, N=N):
            return beta_p + N @ w[:-1], w[-1]

        def fun(w, unpack=unpack, Xr=Xr, yr=yr, k=k):
            beta, ls = unpack(w)
            return _kernels.nll_value(Xr, yr, beta, ls, *args) + k * (ls - log_d)

        def fun_and_grad(w, unpack=unpack, Xr=Xr, yr=yr, k=k, N=N):
            beta, ls = unpack(w)
            val, g = _kernels.nll_and_grad(Xr, yr, beta, ls, *args)
            return val + k * (ls - log_d), np.append(N.T @ g[:d], g[d] + k)

        r = bfgs(fun, fun_and_grad, np.append(np.zeros(d - k), ls0), options)
        iters += r.iterations
        if not r.converged or r.fun > res.fun + options.noise(res.fun):
            continue
        beta, ls = unpack(r.x)
        _, g = _kernels.nll_and_grad(Xr, yr, beta, ls, *args)
        s = math.exp(ls)
        # g_beta + XA^T mu / s = 0 on the row space of XA
        mu = -s * np.linalg.lstsq(XA.T, g[:d], rcond=None)[0]
        if fam.gamma == 1.0 and np.max(np.abs(mu)) > fam.c * (1 + 1e-8):
            continue
        sub = np.append(g[:d] + XA.T @ mu / s, g[d] + k)
        return OptimizeResult(np.append(beta, ls), r.fun, sub, True, iters,
                              f"stationary with {k} residual(s) at the kink",
                              res.fun_history + r.fun_history[1:])
    return None


# --------------------------------------------------------------------------
# data-dependent compact set containing a maximizer


@dataclass(frozen=True)
class FeasibleRegion:
    R0: float
    sigma0: float
    sigma1: float
    alpha: float
    kappa: float
    log_C: float
    A: float
    B: float
    A_tilde: float
    mean_loglik_ref: float

    @property
    def s_bounds(self) -> tuple[float, float]:
        return min(self.sigma0, self.sigma1), max(self.sigma0, self.sigma1)

    def contains(self, beta, s: float) -> bool:
        lo, hi = self.s_bounds
        return bool(np.linalg.norm(beta) <= self.R0 and lo <= s <= hi)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _tail_envelope(fam: NoiseFamily, alpha: float) -> tuple[float, float]:
    """Return (kappa, log C) with f(t) <= C exp(-kappa |t|^alpha) for all t."""
    g, c, tail = fam.gamma, fam.c, fam.tail_exponent
    if alpha > tail + 1e-12:
        raise DomainError(f"alpha={alpha:g} exceeds the tail exponent {tail:g} of family "
                          f"{fam.family}; no exponential envelope exists")
    if fam.family == 1 and abs(alpha - g) <= 1e-12:
        return c, fam.log_d
    kappa = 0.5 * c
    if abs(alpha - tail) <= 1e-12:
        if fam.family == 2:
            if g == 1.0:
                return kappa, fam.log_d
            return kappa, fam.log_d + (g - 1) * math.log(2 * (g - 1) / c) - (g - 1)
        if g == 1.0:
            return kappa, fam.log_d
        tg = 2 * (g - 1) / (c * g)
        return kappa, fam.log_d + (g - 1) / g * math.log(tg) - (g - 1) / g
    # alpha strictly below the tail exponent: maximise log f + kappa t^alpha numerically
    from scipy.optimize import minimize_scalar

    def h(logt):
        t = math.exp(logt)
        return float(fam.log_pdf(t)) + kappa * t ** alpha

    grid = np.linspace(-20.0, 12.0, 3201)
    vals = np.array([h(v) for v in grid])
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    best = max(vals[k], -minimize_scalar(lambda v: -h(v), bounds=(lo, hi), method="bounded").fun)
    if fam.family == 1 or g == 1.0:
        best = max(best, fam.log_d)
    # small safety margin for the numerical maximisation
    return kappa, best + 1e-9


def _min_abs_power_on_sphere(X: np.ndarray, alpha: float, restarts: int,
                             rng: np.random.Generator) -> float:
    """min over unit u of mean |u^T X_i|^alpha (exact eigenvalue for alpha = 2)."""
    n, d = X.shape
    gram = X.T @ X / n
    if abs(alpha - 2.0) <= 1e-12:
        return float(np.linalg.eigvalsh(gram)[0])

    def value(u):
        return float(np.mean(np.abs(X @ u) ** alpha))

    starts = [np.linalg.eigh(gram)[1][:, 0]]
    starts += list(rng.standard_normal((restarts - 1, d)))
    best = math.inf
    for u in starts:
        u = u / np.linalg.norm(u)
        f = value(u)
        step = 0.1
        for _ in range(200):
            z = X @ u
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(z != 0, np.abs(z) ** (alpha - 1) * np.sign(z), 0.0)
            grad = alpha * (X.T @ w) / n
            grad -= (grad @ u) * u  # tangent component
            if np.linalg.norm(grad) < 1e-12:
                break
            while step > 1e-12:
                cand = u - step * grad
                cand /= np.linalg.norm(cand)
                fc = value(cand)
                if fc < f:
                    u, f = cand, fc
                    step *= 1.5
                    break
                step *= 0.5
            else:
                break
        best = min(best, f)
    return best


def feasible_region(data: Dataset, fam: NoiseFamily, alpha: Optional[float] = None,
                    reference: Optional[tuple] = None, restarts: int = 64,
                    seed: int = 0) -> FeasibleRegion:
    """Ball radius ``R0`` and scale bounds ``(sigma0, sigma1)`` of the existence argument.

    Any (beta, s) whose log-likelihood is at least that of ``reference``
    (default: the OLS start used by :func:`mle_fit`) satisfies
    ``||beta|| <= R0`` and ``min(sigma0, sigma1) <= s <= max(sigma0, sigma1)``.

    The tail envelope is ``f(t) <= C exp(-kappa |t|^alpha)``; ``kappa``
    enters ``A``, ``B`` and ``A_tilde`` as a multiplier.  ``A_tilde`` is
    evaluated at the reference beta rather than minimised over the ball.
    """
    data.check_rank()
    if alpha is None:
        alpha = fam.tail_exponent
    alpha = float(alpha)
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    kappa, log_C = _tail_envelope(fam, alpha)
    X, y = data.design, data.response
    n = data.n

    if reference is None:
        ols = ols_fit(data)
        resid = ols.residuals(data)
        _check_not_degenerate(data, resid)
        beta_ref = ols.beta_hat
        s_ref = float(np.std(resid, ddof=1))
    else:
        beta_ref = np.asarray(reference[0], dtype=float)
        s_ref = float(reference[1])
        resid = y - X @ beta_ref
        _check_not_degenerate(data, resid)

    mean_ll = -negative_loglik(data, fam, beta_ref, math.log(s_ref)) / n
    sigma1 = math.exp(fam.log_sup_density - mean_ll)

    c_alpha = 1.0 if alpha < 1 else 2.0 ** (alpha - 1)
    A = kappa * float(np.mean(np.abs(y) ** alpha))
    rng = np.random.default_rng(seed)
    B = kappa / c_alpha * _min_abs_power_on_sphere(X, alpha, restarts, rng)
    if not B > 0:
        raise SingularDesignError("design has a direction u with u^T X_i = 0 for all i")
    gap = abs(log_C - mean_ll)
    R0 = ((1.0 / B) * ((1.0 + alpha * A) / alpha + sigma1 ** alpha * gap)) ** (1.0 / alpha)

    A_tilde = kappa * float(np.mean(np.abs(resid) ** alpha))
    if log_C <= mean_ll:
        sigma0 = (0.5 * alpha * A_tilde) ** (2.0 / alpha)
    else:
        disc = 4.0 / alpha ** 2 + 4.0 * A_tilde * gap
        root = (2.0 / alpha + math.sqrt(disc)) / (2.0 * A_tilde)
        sigma0 = root ** (-2.0 / alpha)
    return FeasibleRegion(R0, sigma0, sigma1, alpha, kappa, log_C, A, B, A_tilde, mean_ll)
