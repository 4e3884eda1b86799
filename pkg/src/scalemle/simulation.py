"""Monte-Carlo harness comparing the MLE and OLS on synthetic regressions.

Randomness is organised as independent streams derived from one integer
seed.  For batch ``b`` the parameter vectors use ``SeedSequence(seed,
spawn_key=(b, 0, k))`` for k = 0..3 and replication ``r`` uses
``spawn_key=(b, 1, r)``, so
any replication can be recomputed alone and the execution order or the
number of worker processes never changes a result.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .asymptotics import EfficiencyReport, eta_closed_form, eta_quadrature_oracle
from .errors import BatchError, DataError, DomainError, EfficiencyUndefinedError, ScaleMLEError
from .estimators import Dataset, mle_fit, ols_fit
from .families import NoiseFamily, ScaledNoise, sample
from .optimize import OptimizerSettings

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "DrawnParams",
    "ReplicationRecord",
    "BatchResult",
    "draw_parameters",
    "generate_dataset",
    "run_replication",
    "run_batch",
    "are_from_estimates",
    "estimate_are",
    "dimension_sweep",
    "resample_stddev",
    "figure_rows",
    "rows_to_csv",
]

MAX_FAILURE_RATE = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one Monte-Carlo batch.

    ``sigma_x_floor`` clamps the per-coordinate covariate standard deviation
    from below (``None`` disables the clamp).
    """

    n: int
    d: int
    family: int
    gamma: float
    M: int = 100
    seed: int = 0
    beta_range: tuple = (-5.0, 5.0)
    mu_x_range: tuple = (-3.0, 3.0)
    sigma_x_range: tuple = (0.0, 2.0)
    s0_range: tuple = (1.0, 3.0)
    sigma_x_floor: Optional[float] = 0.05
    threads: int = 1

    def __post_init__(self):
        for name in ("n", "d", "M"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"{name} must be a positive integer, got {getattr(self, name)!r}")
        if self.n < self.d + 1:
            raise DomainError("n must be at least d + 1")
        if int(self.threads) < 1:
            raise DomainError("threads must be at least 1")
        for name in ("beta_range", "mu_x_range", "sigma_x_range", "s0_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise DomainError(f"{name} must be an increasing pair")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.s0_range[0] <= 0:
            raise DomainError("s0_range must be strictly positive")
        self.noise_family()  # validates (family, gamma)

    def noise_family(self) -> NoiseFamily:
        return NoiseFamily(int(self.family), float(self.gamma))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        for k in ("beta_range", "mu_x_range", "sigma_x_range", "s0_range"):
            if k in kwargs:
                kwargs[k] = tuple(kwargs[k])
        return cls(**kwargs)


@dataclass(frozen=True)
class DrawnParams:
    beta0: np.ndarray
    mu_x: np.ndarray
    sigma_x: np.ndarray
    s0: float

    def to_dict(self) -> dict:
        return {"beta0": self.beta0.tolist(), "mu_x": self.mu_x.tolist(),
                "sigma_x": self.sigma_x.tolist(), "s0": self.s0}


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))


def draw_parameters(config: ExperimentConfig, batch_index: int = 0) -> DrawnParams:
    """Draw beta0, mu_X, sigma_X and s0 once for a batch.

    Each vector comes from its own child stream, so the leading coordinates
    do not depend on ``d``: a dimension sweep extends the same draw.
    """
    d = config.d
    beta0 = _stream(config.seed, batch_index, 0, 0).uniform(*config.beta_range, size=d)
    mu_x = _stream(config.seed, batch_index, 0, 1).uniform(*config.mu_x_range, size=d)
    sigma_x = _stream(config.seed, batch_index, 0, 2).uniform(*config.sigma_x_range, size=d)
    if config.sigma_x_floor is not None:
        sigma_x = np.maximum(sigma_x, config.sigma_x_floor)
    s0 = float(_stream(config.seed, batch_index, 0, 3).uniform(*config.s0_range))
    return DrawnParams(beta0, mu_x, sigma_x, s0)


def generate_dataset(config: ExperimentConfig, params: DrawnParams,
                     rng: np.random.Generator) -> Dataset:
    """Rows X_i ~ N(mu_X, diag(sigma_X^2)) and Y = X beta0 + eps with eps at scale s0."""
    X = params.mu_x + params.sigma_x * rng.standard_normal((config.n, config.d))
    eps = sample(ScaledNoise(config.noise_family(), params.s0), rng, config.n)
    return Dataset(X, X @ params.beta0 + eps)


@dataclass
class ReplicationRecord:
    rep: int
    beta_ols: Optional[np.ndarray] = None
    beta_mle: Optional[np.ndarray] = None
    s_mle: Optional[float] = None
    dist_ols: Optional[float] = None
    dist_mle: Optional[float] = None
    converged: bool = False
    iterations: int = 0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_replication(config: ExperimentConfig, params: DrawnParams, rep: int,
                    batch_index: int = 0,
                    options: OptimizerSettings = OptimizerSettings()) -> ReplicationRecord:
    rng = _stream(config.seed, batch_index, 1, rep)
    try:
        data = generate_dataset(config, params, rng)
        ols = ols_fit(data)
        mle = mle_fit(data, config.noise_family(), options)
    except ScaleMLEError as exc:
        return ReplicationRecord(rep, error=f"{type(exc).__name__}: {exc}")
    return ReplicationRecord(
        rep, ols.beta_hat, mle.beta_hat, mle.s_hat,
        float(np.linalg.norm(ols.beta_hat - params.beta0)),
        float(np.linalg.norm(mle.beta_hat - params.beta0)),
        mle.converged, mle.iterations,
    )


def _run_chunk(args):
    config, params, reps, batch_index = args
    return [run_replication(config, params, r, batch_index) for r in reps]


def _describe(values: np.ndarray) -> dict:
    if values.size == 0:
        return {k: None for k in ("mean", "median", "q25", "q75", "min", "max", "mean_sq", "sd")}
    return {
        "mean": float(np.mean(values)),
        "median": float(np.median(values)),
        "q25": float(np.quantile(values, 0.25)),
        "q75": float(np.quantile(values, 0.75)),
        "min": float(np.min(values)),
        "max": float(np.max(values)),
        "mean_sq": float(np.mean(values ** 2)),
        "sd": float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
    }


@dataclass
class BatchResult:
    config: ExperimentConfig
    params: DrawnParams
    records: list
    batch_index: int = 0
    summary: dict = field(default_factory=dict)

    def ok_records(self) -> list:
        return [r for r in self.records if not r.failed]

    def estimates(self, which: str) -> np.ndarray:
        key = {"mle": "beta_mle", "ols": "beta_ols"}[which]
        rows = [getattr(r, key) for r in self.ok_records()]
        return np.array(rows) if rows else np.empty((0, self.config.d))

    def records_csv(self) -> str:
        d = self.config.d
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rep", "dist_ols", "dist_mle", "s_mle", "converged", "iterations", "error"]
                   + [f"beta_ols_{j}" for j in range(d)] + [f"beta_mle_{j}" for j in range(d)])
        for r in self.records:
            if r.failed:
                w.writerow([r.rep, "", "", "", False, 0, r.error] + [""] * (2 * d))
                continue
            w.writerow([r.rep, repr(r.dist_ols), repr(r.dist_mle), repr(r.s_mle), r.converged,
                        r.iterations, ""] + [repr(float(v)) for v in r.beta_ols]
                       + [repr(float(v)) for v in r.beta_mle])
        return buf.getvalue()

    def summary_json(self, extra: Optional[dict] = None) -> str:
        payload = {"config": self.config.to_dict(), "batch_index": self.batch_index,
                   "params": self.params.to_dict(), "summary": self.summary}
        if extra:
            payload.update(extra)
        return json.dumps(payload, indent=2, sort_keys=True)


def summarize(records: Sequence[ReplicationRecord]) -> dict:
    records = sorted(records, key=lambda r: r.rep)
    ok = [r for r in records if not r.failed]
    d_ols = np.array([r.dist_ols for r in ok])
    d_mle = np.array([r.dist_mle for r in ok])
    return {
        "replications": len(records),
        "failures": len(records) - len(ok),
        "convergence_rate": (sum(r.converged for r in ok) / len(ok)) if ok else 0.0,
        "ols": _describe(d_ols),
        "mle": _describe(d_mle),
        "mle_closer_fraction": float(np.mean(d_mle <= d_ols)) if ok else None,
    }


def run_batch(config: ExperimentConfig, batch_index: int = 0,
              execution_order: Optional[Sequence[int]] = None) -> BatchResult:
    """Fit both estimators on ``config.M`` independent datasets.

    Individual failures are kept as records; more than 20% failures raise
    :class:`BatchError`.  ``execution_order`` permutes the order in which
    replications are computed (results are identical for any order).
    """
    params = draw_parameters(config, batch_index)
    order = list(range(config.M)) if execution_order is None else [int(r) for r in execution_order]
    if sorted(order) != list(range(config.M)):
        raise DomainError("execution_order must be a permutation of range(M)")
    workers = min(int(config.threads), config.M)
    if workers <= 1:
        records = [run_replication(config, params, r, batch_index) for r in order]
    else:
        chunks = [order[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [(config, params, c, batch_index) for c in chunks])
            records = [rec for part in parts for rec in part]
    records.sort(key=lambda r: r.rep)
    failures = sum(r.failed for r in records)
    if failures > MAX_FAILURE_RATE * config.M:
        raise BatchError(f"{failures} of {config.M} replications failed; first error: "
                         f"{next(r.error for r in records if r.failed)}")
    if failures:
        logger.warning("%d of %d replications failed", failures, config.M)
    return BatchResult(config, params, records, batch_index, summarize(records))


def are_from_estimates(beta_mle: np.ndarray, beta_ols: np.ndarray) -> Optional[float]:
    """(det Var(beta_mle) / det Var(beta_ols))^(1/d) from replicated estimates.

    Returns ``None`` when either sample covariance is singular.
    """
    beta_mle = np.atleast_2d(beta_mle)
    beta_ols = np.atleast_2d(beta_ols)
    m, d = beta_mle.shape
    if m < d + 1:
        return None
    cov_m = np.atleast_2d(np.cov(beta_mle, rowvar=False))
    cov_o = np.atleast_2d(np.cov(beta_ols, rowvar=False))
    sign_m, logdet_m = np.linalg.slogdet(cov_m)
    sign_o, logdet_o = np.linalg.slogdet(cov_o)
    if sign_m <= 0 or sign_o <= 0 or not (np.isfinite(logdet_m) and np.isfinite(logdet_o)):
        return None
    # tiny determinants relative to the scale of the entries mean numerical rank loss;
    # spread at the rounding level of the estimates themselves means no spread at all
    for cov, logdet, est in ((cov_m, logdet_m, beta_mle), (cov_o, logdet_o, beta_ols)):
        scale = np.max(np.abs(np.diag(cov)))
        magnitude = float(np.max(np.abs(est)))
        if (scale == 0 or logdet < d * math.log(scale) + d * math.log(1e-13)
                or math.sqrt(scale) <= 1e-12 * magnitude):
            return None
    return math.exp((logdet_m - logdet_o) / d)


def _theory(fam: NoiseFamily) -> tuple:
    try:
        return eta_closed_form(fam), eta_quadrature_oracle(fam)
    except EfficiencyUndefinedError:
        return None, None


def estimate_are(config: ExperimentConfig, batches: int = 10,
                 confidence: float = 0.95) -> EfficiencyReport:
    """Empirical efficiency: one estimate per batch, mean and t-interval across batches.

    Each batch redraws (beta0, mu_X, sigma_X, s0) and runs ``config.M``
    replications.
    """
    if config.M < config.d + 2:
        raise DomainError(f"need M >= d + 2 replications per batch, got M={config.M}, d={config.d}")
    estimates = []
    for b in range(int(batches)):
        res = run_batch(config, batch_index=b)
        eta_b = are_from_estimates(res.estimates("mle"), res.estimates("ols"))
        if eta_b is None:
            warnings.warn(f"batch {b}: singular sample covariance, skipped", RuntimeWarning)
            continue
        estimates.append(eta_b)
    fam = config.noise_family()
    closed, quad = _theory(fam)
    report = EfficiencyReport(fam, closed, quad, replications=config.M, batches=len(estimates),
                              batch_estimates=estimates)
    if estimates:
        arr = np.array(estimates)
        report.eta_empirical = float(arr.mean())
        if arr.size > 1:
            half = stats.t.ppf(0.5 + confidence / 2, arr.size - 1) * arr.std(ddof=1) / math.sqrt(arr.size)
            report.ci_low = float(report.eta_empirical - half)
            report.ci_high = float(report.eta_empirical + half)
    return report


def dimension_sweep(base: ExperimentConfig, d_list: Sequence[int]) -> list:
    """Mean squared distance to beta0 of both estimators for each dimension."""
    rows = []
    for d in d_list:
        cfg = dataclasses.replace(base, d=int(d))
        res = run_batch(cfg)
        rows.append({
            "d": int(d),
            "mse_ols": res.summary["ols"]["mean_sq"],
            "mse_mle": res.summary["mle"]["mean_sq"],
            "median_ols": res.summary["ols"]["median"],
            "median_mle": res.summary["mle"]["median"],
        })
    return rows


def resample_stddev(data: Dataset, fam: NoiseFamily, subsets: int, subset_size: int,
                    seed: int = 0, replace: bool = False,
                    options: OptimizerSettings = OptimizerSettings()) -> np.ndarray:
    """Standard deviation of (beta_hat, s_hat) over MLE refits on random subsets.

    Each subset is drawn without replacement (``replace=True`` gives
    bootstrap-style subsets) independently of the others.
    """
    if subset_size > data.n and not replace:
        raise DomainError(f"subset size {subset_size} exceeds n={data.n}")
    if subset_size <= data.d + 1:
        raise DomainError("subset size must exceed d + 1")
    rng = np.random.default_rng(seed)
    fits = []
    for _ in range(int(subsets)):
        idx = rng.choice(data.n, size=subset_size, replace=replace)
        fit = mle_fit(data.subset(idx), fam, options)
        fits.append(np.append(fit.beta_hat, fit.s_hat))
    return np.std(np.array(fits), axis=0)


FIGURE_COLUMNS = ["estimator", "family", "gamma", "d", "n", "metric", "value"]


def figure_rows(result: BatchResult) -> list:
    """Long-format rows (one per replication and estimator) for boxplot-style figures."""
    cfg = result.config
    rows = []
    for r in result.ok_records():
        rows.append(["ols", cfg.family, cfg.gamma, cfg.d, cfg.n, "distance", r.dist_ols])
        rows.append(["mle", cfg.family, cfg.gamma, cfg.d, cfg.n, "distance", r.dist_mle])
    for est in ("ols", "mle"):
        rows.append([est, cfg.family, cfg.gamma, cfg.d, cfg.n, "mean_sq_distance",
                     result.summary[est]["mean_sq"]])
    return rows


def rows_to_csv(rows: Sequence[Sequence], header: Sequence[str] = FIGURE_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()
