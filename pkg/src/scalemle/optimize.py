"""BFGS with Armijo backtracking on the inverse-Hessian approximation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimizerSettings", "OptimizeResult", "bfgs"]


@dataclass(frozen=True)
class OptimizerSettings:
    """Stopping rule: ``max|grad| <= gtol * (1 + |f|)`` or ``max_iter`` iterations.

    ``rel_noise`` bounds the rounding error of one objective evaluation,
    as a fraction of ``1 + |f|``.  Inside that band function values cannot
    rank trial points, and a step is accepted on derivative evidence
    instead (approximate Wolfe conditions).
    """

    gtol: float = 1e-8
    max_iter: int = 500
    max_halvings: int = 40
    armijo: float = 1e-4
    rel_noise: float = 1e-14
    wolfe_delta: float = 0.1
    wolfe_sigma: float = 0.9

    def noise(self, f: float) -> float:
        return self.rel_noise * (1.0 + abs(f))


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    converged: bool
    iterations: int
    message: str
    fun_history: list = field(default_factory=list)

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def bfgs(fun, fun_and_grad, x0, settings: OptimizerSettings = OptimizerSettings(),
         inv_hessian0=None) -> OptimizeResult:
    """Minimise ``fun`` from ``x0``.

    ``fun(x)`` returns the objective and ``fun_and_grad(x)`` the pair
    ``(f, grad)``.  A trial step is accepted when it passes the Armijo test,
    or when its value is within the evaluation noise of ``f`` and the
    directional derivative satisfies the approximate Wolfe conditions
    ``sigma * phi'(0) <= phi'(t) <= (2 delta - 1) * phi'(0)``.
    Non-finite trial values count as failures and the step is halved.
    After ``settings.max_halvings`` halvings the run stops with
    ``converged=False``.

    If ``inv_hessian0`` is not given the initial inverse Hessian is
    ``I / (1 + |f(x0)|)``, rescaled by ``s'y / y'y`` after the first step.
    """
    x = np.array(x0, dtype=float)
    f, g = fun_and_grad(x)
    n = x.size
    eye = np.eye(n)
    rescale_first = inv_hessian0 is None
    H = eye / (1.0 + abs(f)) if inv_hessian0 is None else np.array(inv_hessian0, dtype=float)
    history = [f]

    if not math.isfinite(f):
        return OptimizeResult(x, f, g, False, 0, "non-finite objective at start", history)

    it = 0
    while True:
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= settings.gtol * (1.0 + abs(f)):
            return OptimizeResult(x, f, g, True, it, "gradient tolerance reached", history)
        if it >= settings.max_iter:
            return OptimizeResult(x, f, g, False, it, "maximum iterations reached", history)
        it += 1

        p = -H @ g
        slope = float(g @ p)
        if not slope < 0:
            # lost positive definiteness; restart from a scaled steepest descent
            H = eye / (1.0 + abs(f))
            p = -H @ g
            slope = float(g @ p)

        step = 1.0
        noise = settings.noise(f)
        g_new = None
        for _ in range(settings.max_halvings + 1):
            x_new = x + step * p
            f_new = fun(x_new)
            if math.isfinite(f_new):
                if f_new <= f + settings.armijo * step * slope:
                    break
                if f_new <= f + noise:
                    f_new, g_trial = fun_and_grad(x_new)
                    dphi = float(g_trial @ p)
                    if (settings.wolfe_sigma * slope <= dphi
                            <= (2 * settings.wolfe_delta - 1) * slope):
                        g_new = g_trial
                        break
            step *= 0.5
        else:
            return OptimizeResult(x, f, g, False, it, "line search failed", history)

        if g_new is None:
            f_new, g_new = fun_and_grad(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * math.sqrt(float(s @ s) * float(y @ y)):
            if rescale_first:
                H = eye * (sy / float(y @ y))
                rescale_first = False
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) \
                + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        history.append(f)
