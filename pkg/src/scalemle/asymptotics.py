"""Fisher information, asymptotic covariances and relative efficiency vs OLS."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, EfficiencyUndefinedError, SingularDesignError
from .families import NoiseFamily
from .special_math import integrate_real_line_even, log_gamma

__all__ = [
    "FisherBlocks",
    "EfficiencyReport",
    "EtaCurve",
    "score_integrals",
    "fisher_blocks",
    "eta_closed_form",
    "eta_quadrature_oracle",
    "eta_curve",
    "mle_asymptotic_cov",
    "ols_asymptotic_cov",
]


@dataclass(frozen=True)
class ScoreIntegrals:
    """Unit-scale integrals of a standardized density f with score psi = f'/f."""

    mass: float          # int f
    second_moment: float  # int t^2 f
    fisher_location: float  # int (f')^2 / f
    fisher_scale: float  # int t^2 (f')^2 / f
    t_fprime: float      # int t f'(t), equal to -1 for any density with finite mean


@lru_cache(maxsize=256)
def _score_integrals(family: int, gamma: float) -> ScoreIntegrals:
    fam = NoiseFamily(family, gamma)
    pdf = fam.pdf
    return ScoreIntegrals(
        mass=integrate_real_line_even(pdf),
        second_moment=integrate_real_line_even(lambda t: t * t * pdf(t)),
        fisher_location=integrate_real_line_even(fam.score_sq_pdf),
        fisher_scale=integrate_real_line_even(lambda t: t * t * fam.score_sq_pdf(t)),
        t_fprime=integrate_real_line_even(lambda t: t * fam.score(t) * pdf(t)),
    )


def score_integrals(fam: NoiseFamily) -> ScoreIntegrals:
    """Quadrature values of the integrals behind I0 and eta (cached per shape)."""
    fam.check_efficiency_domain()
    return _score_integrals(fam.family, fam.gamma)


@dataclass(frozen=True)
class FisherBlocks:
    c1: float
    c2: float
    xxT: np.ndarray

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise DomainError(f"Fisher constants must be positive (c1={self.c1}, c2={self.c2})")
        xxT = np.atleast_2d(np.asarray(self.xxT, dtype=float))
        if xxT.shape[0] != xxT.shape[1] or not np.allclose(xxT, xxT.T, rtol=1e-12, atol=0):
            raise DomainError("xxT must be a symmetric square matrix")
        object.__setattr__(self, "xxT", xxT)

    @property
    def dim(self) -> int:
        return self.xxT.shape[0]

    def information(self) -> np.ndarray:
        """Block-diagonal I0 = diag(c1 * E[XX^T], c2)."""
        d = self.dim
        info = np.zeros((d + 1, d + 1))
        info[:d, :d] = self.c1 * self.xxT
        info[d, d] = self.c2
        return info


def fisher_blocks(fam: NoiseFamily, s: float, xxT) -> FisherBlocks:
    """c1 = J_loc / s^2 and c2 = (J_scale - 1) / s^2 from quadrature."""
    if not (s > 0 and math.isfinite(s)):
        raise DomainError(f"scale must be positive, got {s!r}")
    ints = score_integrals(fam)
    return FisherBlocks(ints.fisher_location / s ** 2, (ints.fisher_scale - 1.0) / s ** 2, xxT)


def mle_asymptotic_cov(blocks: FisherBlocks, n: int) -> np.ndarray:
    """I0^{-1} / n for the parameter vector (beta, s)."""
    d = blocks.dim
    try:
        chol = np.linalg.cholesky(blocks.xxT)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError("E[XX^T] is not positive definite") from exc
    inv_chol = np.linalg.solve(chol, np.eye(d))
    cov = np.zeros((d + 1, d + 1))
    cov[:d, :d] = (inv_chol.T @ inv_chol) / (blocks.c1 * n)
    cov[d, d] = 1.0 / (blocks.c2 * n)
    return cov


def ols_asymptotic_cov(sigma2: float, xxT, n: int) -> np.ndarray:
    """sigma^2 (E[XX^T])^{-1} / n."""
    xxT = np.atleast_2d(np.asarray(xxT, dtype=float))
    try:
        inv = np.linalg.inv(np.linalg.cholesky(xxT))
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError("E[XX^T] is not positive definite") from exc
    return sigma2 * (inv.T @ inv) / n


def eta_closed_form(fam: NoiseFamily) -> float:
    """Asymptotic relative efficiency of the MLE of beta with respect to OLS."""
    fam.check_efficiency_domain()
    g = fam.gamma
    if fam.family == 1:
        log_eta = (2 * log_gamma(1 / g) - 2 * math.log(g)
                   - log_gamma(3 / g) - log_gamma(2 - 1 / g))
    elif fam.family == 2:
        log_eta = log_gamma(g) + math.log(g - 2) - log_gamma(g + 2)
    else:
        log_eta = -(log_gamma(2 / g + 1) + log_gamma(1 - 2 / g) + 2 * math.log(g - 1))
    return math.exp(log_eta)


def eta_quadrature_oracle(fam: NoiseFamily) -> float:
    """[int t^2 f * int (f')^2/f]^{-1}, both integrals by quadrature."""
    ints = score_integrals(fam)
    return 1.0 / (ints.second_moment * ints.fisher_location)


@dataclass
class EfficiencyReport:
    family: NoiseFamily
    eta_closed: float
    eta_quadrature: float
    eta_empirical: Optional[float] = None
    replications: Optional[int] = None
    batches: Optional[int] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    batch_estimates: Optional[list] = None

    def as_dict(self) -> dict:
        return {
            "family": self.family.family,
            "gamma": self.family.gamma,
            "eta_closed": self.eta_closed,
            "eta_quadrature": self.eta_quadrature,
            "eta_empirical": self.eta_empirical,
            "replications": self.replications,
            "batches": self.batches,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "batch_estimates": self.batch_estimates,
        }


@dataclass
class EtaCurve:
    family: int
    rows: list  # (gamma, eta_closed or None, eta_quadrature or None)

    @property
    def gamma_star(self) -> Optional[float]:
        """Grid point with the smallest eta, i.e. the largest MLE advantage."""
        valid = [(eta, g) for g, eta, _ in self.rows if eta is not None]
        return min(valid)[1] if valid else None

    @property
    def gamma_max(self) -> Optional[float]:
        valid = [(eta, g) for g, eta, _ in self.rows if eta is not None]
        return max(valid)[1] if valid else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["gamma", "eta_closed", "eta_quadrature"])
        for g, eta, quad in self.rows:
            writer.writerow([repr(g),
                             "undefined" if eta is None else repr(eta),
                             "undefined" if quad is None else repr(quad)])
        return buf.getvalue()


def eta_curve(family: int, gammas: Sequence[float]) -> EtaCurve:
    """Tabulate eta over a shape grid; out-of-domain points are kept as undefined."""
    rows = []
    for g in gammas:
        try:
            fam = NoiseFamily(family, float(g))
            rows.append((float(g), eta_closed_form(fam), eta_quadrature_oracle(fam)))
        except DomainError:
            rows.append((float(g), None, None))
    return EtaCurve(family, rows)
