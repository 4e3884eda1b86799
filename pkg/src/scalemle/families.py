"""Standardized symmetric scale families and their samplers.

Three shape-indexed families of even densities with unit second moment::

    family 1:  d * exp(-c |t|^g)                 g > 0
    family 2:  d * |t|^(g-1) * exp(-c |t|)       g >= 1
    family 3:  d * |t|^(g-1) * exp(-c |t|^g)     g >= 1

Family 1 is the generalized normal (g=2 Gaussian, g=1 Laplace); family 2 is a
symmetrized Gamma and family 3 a symmetrized Weibull.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, EfficiencyUndefinedError, SingularityError
from .special_math import log_gamma

__all__ = [
    "NoiseFamily",
    "ScaledNoise",
    "ZERO_CLAMP",
    "constants",
    "density",
    "log_density_and_score",
    "sample",
]

# residuals with |t| < ZERO_CLAMP * s are moved to +-ZERO_CLAMP * s
ZERO_CLAMP = 1e-12

# margin kept from the open endpoints of the efficiency domains
EFFICIENCY_MARGIN = 1e-3


@dataclass(frozen=True)
class NoiseFamily:
    """A family index (1, 2 or 3) with shape ``gamma``."""

    family: int
    gamma: float

    def __post_init__(self):
        if self.family not in (1, 2, 3):
            raise DomainError(f"family must be 1, 2 or 3, got {self.family!r}")
        g = float(self.gamma)
        if not math.isfinite(g) or g <= 0:
            raise DomainError(f"gamma must be a finite positive number, got {self.gamma!r}")
        if self.family in (2, 3) and g < 1:
            raise DomainError(f"family {self.family} requires gamma >= 1, got {g}")
        object.__setattr__(self, "gamma", g)

    @cached_property
    def log_c(self) -> float:
        g = self.gamma
        if self.family == 1:
            return 0.5 * g * (log_gamma(3.0 / g) - log_gamma(1.0 / g))
        if self.family == 2:
            return 0.5 * (log_gamma(g + 2.0) - log_gamma(g))
        return 0.5 * g * log_gamma(2.0 / g + 1.0)

    @cached_property
    def log_d(self) -> float:
        g = self.gamma
        if self.family == 1:
            return math.log(g / 2.0) + 0.5 * (log_gamma(3.0 / g) - 3.0 * log_gamma(1.0 / g))
        if self.family == 2:
            return -math.log(2.0) - log_gamma(g) + 0.5 * g * (log_gamma(g + 2.0) - log_gamma(g))
        return math.log(g / 2.0) + 0.5 * g * log_gamma(2.0 / g + 1.0)

    @property
    def c(self) -> float:
        return math.exp(self.log_c)

    @property
    def d(self) -> float:
        return math.exp(self.log_d)

    @property
    def tail_exponent(self) -> float:
        """Exponent of the exponential tail: ``gamma`` for families 1 and 3, 1 for family 2."""
        return 1.0 if self.family == 2 else self.gamma

    @property
    def log_sup_density(self) -> float:
        """log of max_t f(t); the mode sits at 0 (family 1 or g=1) or at t > 0."""
        g = self.gamma
        if self.family == 1 or g == 1.0:
            return self.log_d
        if self.family == 2:
            t = (g - 1.0) / self.c
            return self.log_d + (g - 1.0) * math.log(t) - self.c * t
        tg = (g - 1.0) / (self.c * g)
        return self.log_d + (g - 1.0) / g * math.log(tg) - (g - 1.0) / g

    def efficiency_domain(self) -> tuple[float, float]:
        """Open interval of shapes for which the efficiency is finite."""
        return (0.5, math.inf) if self.family == 1 else (2.0, math.inf)

    def check_efficiency_domain(self) -> None:
        lo, _ = self.efficiency_domain()
        if self.gamma <= lo + EFFICIENCY_MARGIN:
            raise EfficiencyUndefinedError(
                f"efficiency for family {self.family} requires gamma > {lo:g} "
                f"(with margin {EFFICIENCY_MARGIN:g}); got gamma={self.gamma:g}"
            )

    # vectorised standard-scale (s = 1) helpers ---------------------------

    def log_pdf(self, u):
        """log f(u) at unit scale; -inf at u=0 for families 2-3 with g > 1."""
        a = np.abs(np.asarray(u, dtype=float))
        g = self.gamma
        with np.errstate(divide="ignore"):
            if self.family == 1:
                return self.log_d - self.c * a ** g
            if self.family == 2:
                return self.log_d + (g - 1.0) * np.log(a) - self.c * a if g != 1.0 \
                    else self.log_d - self.c * a
            if g == 1.0:
                return self.log_d - self.c * a
            return self.log_d + (g - 1.0) * np.log(a) - self.c * a ** g

    def pdf(self, u):
        return np.exp(self.log_pdf(u))

    def score(self, u):
        """d/du log f(u) at unit scale (the ratio f'/f)."""
        u = np.asarray(u, dtype=float)
        a = np.abs(u)
        sgn = np.sign(u)
        g = self.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.family == 1:
                return -self.c * g * sgn * a ** (g - 1.0)
            if self.family == 2:
                return (g - 1.0) / u - self.c * sgn
            return (g - 1.0) / u - self.c * g * sgn * a ** (g - 1.0)

    def score_sq_pdf(self, u):
        """(f')^2 / f at unit scale, written as score^2 * f."""
        sc = self.score(u)
        return sc * sc * self.pdf(u)


def constants(fam: NoiseFamily) -> tuple[float, float]:
    """Return ``(c_gamma, d_gamma)`` for the family."""
    return fam.c, fam.d


@dataclass(frozen=True)
class ScaledNoise:
    base: NoiseFamily
    scale: float = 1.0

    def __post_init__(self):
        s = float(self.scale)
        if not (math.isfinite(s) and s > 0):
            raise DomainError(f"scale must be positive and finite, got {self.scale!r}")
        object.__setattr__(self, "scale", s)


def density(noise: ScaledNoise, t):
    """Density ``s^-1 f(t / s)``; accepts scalars or arrays."""
    s = noise.scale
    out = noise.base.pdf(np.asarray(t, dtype=float) / s) / s
    return float(out) if np.ndim(out) == 0 else out


def log_density_and_score(noise: ScaledNoise, t):
    """Return ``(log f_s(t), d/dt log f_s(t))`` in closed form.

    For families 2-3 with ``gamma > 1`` the log-density is ``-inf`` at 0, and
    ``t == 0`` raises :class:`SingularityError`; callers pick their own
    clamping policy (the likelihood uses :data:`ZERO_CLAMP`).
    """
    fam, s = noise.base, noise.scale
    t_arr = np.asarray(t, dtype=float)
    if fam.family in (2, 3) and fam.gamma != 1.0 and np.any(t_arr == 0.0):
        raise SingularityError(
            f"log-density of family {fam.family} is -inf at t=0 for gamma={fam.gamma:g}"
        )
    u = t_arr / s
    logf = fam.log_pdf(u) - math.log(s)
    sc = fam.score(u) / s
    if np.ndim(logf) == 0:
        return float(logf), float(sc)
    return logf, sc


def sample(noise: ScaledNoise, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. values with density ``s^-1 f(./s)``.

    Family 1 uses the Gamma-power construction ``|X| = G^(1/g)`` with
    ``G ~ Gamma(1/g, 1)``, which has density proportional to exp(-|x|^g),
    then rescales by ``c^(-1/g)``.  Family 2 draws Gamma(shape g, rate c)
    magnitudes and family 3 Weibull(shape g, scale c^(-1/g)) magnitudes.
    All are given a uniformly random sign.
    """
    count = int(count)
    if count < 0:
        raise DomainError("count must be non-negative")
    if count == 0:
        return np.empty(0)
    fam, s = noise.base, noise.scale
    g = fam.gamma
    if fam.family == 1:
        mag = rng.gamma(1.0 / g, 1.0, size=count) ** (1.0 / g)
        mag *= math.exp(-fam.log_c / g)
    elif fam.family == 2:
        mag = rng.gamma(g, 1.0 / fam.c, size=count)
    else:
        mag = rng.weibull(g, size=count) * math.exp(-fam.log_c / g)
    signs = np.where(rng.random(count) < 0.5, -1.0, 1.0)
    return s * signs * mag
