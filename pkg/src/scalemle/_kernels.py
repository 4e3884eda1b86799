"""Negative log-likelihood kernels.

Two interchangeable backends compute the same quantities:

* ``numba`` -- ``@njit`` loops over the residuals (matrix products via BLAS);
* ``numpy`` -- vectorised array expressions.

The numba path is used when numba imports cleanly and the environment variable
``SCALEMLE_DISABLE_NUMBA`` is unset (or set to ``0``/``false``).  Call
:func:`set_backend` to switch at runtime, e.g. from a benchmark.
"""
from __future__ import annotations

import math
import os

import numpy as np

__all__ = ["BACKEND", "nll_value", "nll_and_grad", "smoothed_nll_and_grad", "set_backend",
           "available_backends"]

_CLAMP = 1e-12


def _env_disabled() -> bool:
    return os.environ.get("SCALEMLE_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


# ---------------------------------------------------------------- numpy path

def _residual_scores_np(X, y, beta, log_s, family, g, log_c, log_d):
    s = math.exp(log_s)
    u = (y - X @ beta) / s
    a = np.abs(u)
    small = a < _CLAMP
    if small.any():
        u = np.where(small, np.where(u < 0, -_CLAMP, _CLAMP), u)
        a = np.abs(u)
    c = math.exp(log_c)
    sgn = np.sign(u)
    if family == 1:
        p = a ** g
        logf = log_d - c * p
        psi = -c * g * sgn * p / a
    elif family == 2:
        logf = log_d + (g - 1.0) * np.log(a) - c * a
        psi = (g - 1.0) / u - c * sgn
    else:
        p = a ** g
        logf = log_d + (g - 1.0) * np.log(a) - c * p
        psi = (g - 1.0) / u - c * g * sgn * p / a
    return s, u, logf, psi


def _nll_value_np(X, y, beta, log_s, family, g, log_c, log_d):
    _, _, logf, _ = _residual_scores_np(X, y, beta, log_s, family, g, log_c, log_d)
    return X.shape[0] * log_s - logf.sum()


def _nll_and_grad_np(X, y, beta, log_s, family, g, log_c, log_d):
    s, u, logf, psi = _residual_scores_np(X, y, beta, log_s, family, g, log_c, log_d)
    n, d = X.shape
    grad = np.empty(d + 1)
    grad[:d] = (psi @ X) / s
    grad[d] = n + psi @ u
    return n * log_s - logf.sum(), grad


def _smoothed_np(X, y, beta, log_s, family, g, log_c, eps):
    s = math.exp(log_s)
    u = (y - X @ beta) / s
    q = u * u + eps * eps
    c = math.exp(log_c)
    if family == 2:
        a = np.sqrt(q)
        phi, dphi = a, u / a
    else:
        a = np.abs(u)
        phi, dphi = a ** g, g * np.sign(u) * a ** (g - 1.0)
    h = -0.5 * (g - 1.0) * np.log(q) + c * phi
    dh = -(g - 1.0) * u / q + c * dphi
    n, d = X.shape
    grad = np.empty(d + 1)
    grad[:d] = -(dh @ X) / s
    grad[d] = n - dh @ u
    return n * log_s + h.sum(), grad


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:

    # residuals and the gradient contraction go through BLAS; the loop only
    # handles the per-residual transcendental terms, one log per residual

    @njit(cache=True, nogil=True, error_model="numpy")
    def _logf_psi_nb(u, family, g, c, log_d):
        if u >= 0.0:
            a = u if u >= _CLAMP else _CLAMP
            u = a
            sgn = 1.0
        else:
            a = -u if -u >= _CLAMP else _CLAMP
            u = -a
            sgn = -1.0
        if family == 1:
            p = math.exp(g * math.log(a))
            return log_d - c * p, -c * g * sgn * p / a, u
        if family == 2:
            return log_d + (g - 1.0) * math.log(a) - c * a, (g - 1.0) / u - c * sgn, u
        la = math.log(a)
        p = math.exp(g * la)
        return log_d + (g - 1.0) * la - c * p, (g - 1.0) / u - c * g * sgn * p / a, u

    @njit(cache=True, nogil=True, error_model="numpy")
    def _nll_value_nb(X, y, beta, log_s, family, g, log_c, log_d):
        n = X.shape[0]
        inv_s = math.exp(-log_s)
        c = math.exp(log_c)
        r = y - X @ beta
        acc = 0.0
        for i in range(n):
            logf, _, _ = _logf_psi_nb(r[i] * inv_s, family, g, c, log_d)
            acc += logf
        return n * log_s - acc

    @njit(cache=True, nogil=True, error_model="numpy")
    def _nll_and_grad_nb(X, y, beta, log_s, family, g, log_c, log_d):
        n, d = X.shape
        inv_s = math.exp(-log_s)
        c = math.exp(log_c)
        r = y - X @ beta
        psi = np.empty(n)
        acc = 0.0
        dscale = 0.0
        for i in range(n):
            logf, ps, u = _logf_psi_nb(r[i] * inv_s, family, g, c, log_d)
            acc += logf
            psi[i] = ps
            dscale += ps * u
        grad = np.empty(d + 1)
        grad[:d] = (X.T @ psi) * inv_s
        grad[d] = n + dscale
        return n * log_s - acc, grad

    @njit(cache=True, nogil=True, error_model="numpy")
    def _smoothed_nb(X, y, beta, log_s, family, g, log_c, eps):
        n, d = X.shape
        inv_s = math.exp(-log_s)
        c = math.exp(log_c)
        e2 = eps * eps
        r = y - X @ beta
        dh = np.empty(n)
        acc = 0.0
        dscale = 0.0
        for i in range(n):
            u = r[i] * inv_s
            q = u * u + e2
            if family == 2:
                a = math.sqrt(q)
                phi = a
                dphi = u / a
            else:
                a = abs(u)
                phi = math.exp(g * math.log(a)) if a > 0.0 else 0.0
                dphi = g * phi / a if a > 0.0 else 0.0
                if u < 0.0:
                    dphi = -dphi
            acc += -0.5 * (g - 1.0) * math.log(q) + c * phi
            dh[i] = -(g - 1.0) * u / q + c * dphi
            dscale += dh[i] * u
        grad = np.empty(d + 1)
        grad[:d] = -(X.T @ dh) * inv_s
        grad[d] = n - dscale
        return n * log_s + acc, grad


_BACKENDS = {"numpy": (_nll_value_np, _nll_and_grad_np, _smoothed_np)}
if HAS_NUMBA:
    _BACKENDS["numba"] = (_nll_value_nb, _nll_and_grad_nb, _smoothed_nb)

BACKEND = "numba" if HAS_NUMBA and not _env_disabled() else "numpy"
_value_impl, _grad_impl, _smoothed_impl = _BACKENDS[BACKEND]


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend name."""
    global BACKEND, _value_impl, _grad_impl, _smoothed_impl
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available_backends()}")
    prev = BACKEND
    BACKEND = name
    _value_impl, _grad_impl, _smoothed_impl = _BACKENDS[name]
    return prev


def nll_value(X, y, beta, log_s, family, g, log_c, log_d) -> float:
    return float(_value_impl(X, y, beta, float(log_s), int(family), float(g),
                             float(log_c), float(log_d)))


def nll_and_grad(X, y, beta, log_s, family, g, log_c, log_d):
    val, grad = _grad_impl(X, y, beta, float(log_s), int(family), float(g),
                           float(log_c), float(log_d))
    return float(val), grad


def smoothed_nll_and_grad(X, y, beta, log_s, family, g, log_c, eps):
    """Barrier-smoothed objective for families 2 and 3 (gamma > 1), without the log d term.

    ``log|u|`` is replaced by ``log(u^2 + eps^2) / 2`` and, for family 2,
    ``|u|`` by ``sqrt(u^2 + eps^2)``.  As ``eps -> 0`` this tends to the
    negative log-likelihood minus ``n log d``.
    """
    val, grad = _smoothed_impl(X, y, beta, float(log_s), int(family), float(g),
                               float(log_c), float(eps))
    return float(val), grad
