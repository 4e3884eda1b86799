"""Tabular data workflow: CSV ingestion, centering, train/test evaluation, residual export.

CSV dialect: comma separated, one header row, '.' as decimal separator,
UTF-8.  Empty cells and the tokens ``NA``/``NaN`` (any case) count as
missing; rows with a missing value in a selected column are dropped.
Numbers are written with 17 significant digits so a write/read round trip
is exact.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, DegenerateDataError, DomainError, SingularDesignError
from .estimators import Dataset, FitResult, mle_fit, ols_fit
from .families import NoiseFamily
from .optimize import OptimizerSettings
from .simulation import are_from_estimates

logger = logging.getLogger(__name__)

__all__ = [
    "TabularSource",
    "CenteringRecord",
    "TrainTestReport",
    "read_header",
    "read_table",
    "write_table",
    "load_and_center",
    "center",
    "power_transform",
    "train_test_evaluate",
    "export_residuals",
    "fit_report",
]

MISSING_TOKENS = {"", "na", "nan"}
MAX_REDRAWS = 100
FLOAT_FMT = "{:.17g}"


@dataclass(frozen=True)
class TabularSource:
    """Where the data lives and which columns play which role.

    ``predictors=None`` selects every column that is neither the response
    nor excluded.  ``transform_exponent`` maps the response through
    ``y -> sign(y) |y|^p`` before centering.
    """

    path: str
    response: str
    predictors: Optional[tuple] = None
    excluded: tuple = ()
    transform_exponent: Optional[float] = None

    def __post_init__(self):
        if self.predictors is not None:
            object.__setattr__(self, "predictors", tuple(self.predictors))
            if self.response in self.predictors:
                raise DataError(f"column {self.response!r} is both response and predictor")
            overlap = set(self.predictors) & set(self.excluded)
            if overlap:
                raise DataError(f"columns both selected and excluded: {sorted(overlap)}")
        object.__setattr__(self, "excluded", tuple(self.excluded))
        if self.transform_exponent is not None and not self.transform_exponent > 0:
            raise DataError("transform exponent must be positive")


@dataclass(frozen=True)
class CenteringRecord:
    columns: tuple
    response: str
    x_means: np.ndarray
    y_mean: float
    transform_exponent: Optional[float]
    rows_read: int
    rows_dropped: int

    def center_rows(self, X_raw) -> np.ndarray:
        return np.atleast_2d(np.asarray(X_raw, dtype=float)) - self.x_means

    def predict(self, beta, X_raw) -> np.ndarray:
        """Prediction on the (transformed) response scale for uncentered rows."""
        return self.center_rows(X_raw) @ np.asarray(beta, dtype=float) + self.y_mean

    def as_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "response": self.response,
            "x_means": self.x_means.tolist(),
            "y_mean": self.y_mean,
            "transform_exponent": self.transform_exponent,
            "rows_read": self.rows_read,
            "rows_dropped": self.rows_dropped,
        }


def _parse_cell(text: str, line: int, column: str) -> float:
    token = text.strip()
    if token.lower() in MISSING_TOKENS:
        return math.nan
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"non-numeric value {text!r} at line {line}, column {column!r}") from None
    if math.isinf(value):
        raise DataError(f"infinite value at line {line}, column {column!r}")
    return value


def read_header(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        try:
            return [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None


def read_table(path, columns: Optional[Sequence[str]] = None) -> tuple[list, np.ndarray]:
    """Read the named columns (all if ``None``) into a float array.

    Missing cells become NaN.  Line numbers in errors count the header as
    line 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        wanted = list(header) if columns is None else list(columns)
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataError(f"{path}: column(s) not found: {', '.join(missing)}")
        idx = [header.index(c) for c in wanted]
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line} has {len(row)} fields, expected {len(header)}")
            rows.append([_parse_cell(row[i], line, c) for i, c in zip(idx, wanted)])
    values = np.array(rows, dtype=float).reshape(len(rows), len(wanted))
    return wanted, values


def write_table(path, columns: Sequence[str], values) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(columns))
        for row in values:
            w.writerow([FLOAT_FMT.format(v) for v in row])


def power_transform(y, exponent: float) -> np.ndarray:
    """Odd power map ``sign(y) |y|^p`` (the real cube root for p = 1/3)."""
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.abs(y) ** exponent


def center(data: Dataset) -> Dataset:
    """Subtract column means of the design and the response mean.

    Means already stored on ``data`` are composed with the new ones, so a
    second call leaves the values unchanged up to rounding.
    """
    x_means = data.design.mean(axis=0)
    y_mean = float(data.response.mean())
    prev_x = np.zeros(data.d) if data.x_means is None else data.x_means
    prev_y = 0.0 if data.y_mean is None else data.y_mean
    return Dataset(data.design - x_means, data.response - y_mean, True, data.columns,
                   prev_x + x_means, prev_y + y_mean, data.response_exponent)


def load_and_center(src: TabularSource) -> tuple[Dataset, CenteringRecord]:
    if src.predictors is None:
        header = read_header(src.path)
        predictors = [c for c in header if c != src.response and c not in src.excluded]
    else:
        predictors = list(src.predictors)
    if not predictors:
        raise DataError("no predictor columns selected")
    cols, values = read_table(src.path, [src.response] + predictors)
    rows_read = values.shape[0]
    keep = ~np.isnan(values).any(axis=1)
    dropped = int(rows_read - keep.sum())
    if dropped:
        logger.warning("dropped %d of %d rows with missing values", dropped, rows_read)
    values = values[keep]
    if values.shape[0] == 0:
        raise DataError("no complete rows in the selected columns")
    y = values[:, 0]
    if src.transform_exponent is not None:
        y = power_transform(y, src.transform_exponent)
    raw = Dataset(values[:, 1:], y, columns=tuple(predictors),
                  response_exponent=src.transform_exponent)
    data = center(raw)
    record = CenteringRecord(tuple(predictors), src.response, data.x_means.copy(), data.y_mean,
                             src.transform_exponent, rows_read, dropped)
    return data, record


@dataclass
class TrainTestReport:
    train_size: int
    replications: int
    mse_ols: float
    mse_mle: float
    eta_hat: Optional[float]
    redraws: int
    mle_converged_rate: float
    beta_ols: np.ndarray = field(repr=False)
    beta_mle: np.ndarray = field(repr=False)

    @property
    def beta_ols_mean(self) -> np.ndarray:
        return self.beta_ols.mean(axis=0)

    @property
    def beta_mle_mean(self) -> np.ndarray:
        return self.beta_mle.mean(axis=0)

    def as_dict(self) -> dict:
        return {
            "train_size": self.train_size,
            "replications": self.replications,
            "mse_ols": self.mse_ols,
            "mse_mle": self.mse_mle,
            "eta_hat": self.eta_hat,
            "redraws": self.redraws,
            "mle_converged_rate": self.mle_converged_rate,
            "beta_ols_mean": self.beta_ols_mean.tolist(),
            "beta_mle_mean": self.beta_mle_mean.tolist(),
            "beta_ols_sd": self.beta_ols.std(axis=0, ddof=1).tolist() if self.replications > 1 else None,
            "beta_mle_sd": self.beta_mle.std(axis=0, ddof=1).tolist() if self.replications > 1 else None,
        }


def _draw_split(data: Dataset, train_size: int, rng: np.random.Generator):
    for attempt in range(MAX_REDRAWS + 1):
        perm = rng.permutation(data.n)
        train = data.subset(perm[:train_size])
        try:
            train.check_rank()
        except SingularDesignError:
            continue
        return train, data.subset(perm[train_size:]), attempt
    raise SingularDesignError(f"no full-rank training split of size {train_size} "
                              f"after {MAX_REDRAWS} redraws")


def train_test_evaluate(data: Dataset, fam: NoiseFamily, train_size: int, replications: int,
                        seed: int = 0,
                        options: OptimizerSettings = OptimizerSettings()) -> TrainTestReport:
    """Repeated random splits; both estimators fitted on the training part.

    Reports the mean test squared error of each estimator and the empirical
    efficiency from the spread of the replicated estimates.  A noiseless
    training set has no finite MLE of the scale; there the exact
    interpolating fit is used for both estimators.
    """
    if not data.d + 2 <= train_size < data.n:
        raise DomainError(f"train size must satisfy d + 2 <= N < n (d={data.d}, n={data.n})")
    if replications < 1:
        raise DomainError("replications must be positive")
    rng = np.random.default_rng(seed)
    b_ols, b_mle, mse_o, mse_m = [], [], [], []
    redraws = 0
    converged = 0
    for _ in range(int(replications)):
        train, test, extra = _draw_split(data, train_size, rng)
        redraws += extra
        ols = ols_fit(train)
        try:
            mle = mle_fit(train, fam, options)
            beta_m = mle.beta_hat
            converged += mle.converged
        except DegenerateDataError:
            beta_m = ols.beta_hat
            converged += 1
        b_ols.append(ols.beta_hat)
        b_mle.append(beta_m)
        mse_o.append(float(np.mean((test.response - test.design @ ols.beta_hat) ** 2)))
        mse_m.append(float(np.mean((test.response - test.design @ beta_m) ** 2)))
    b_ols = np.array(b_ols)
    b_mle = np.array(b_mle)
    return TrainTestReport(int(train_size), int(replications), float(np.mean(mse_o)),
                           float(np.mean(mse_m)), are_from_estimates(b_mle, b_ols), redraws,
                           converged / replications, b_ols, b_mle)


def export_residuals(data: Dataset, fit: FitResult, path) -> Path:
    """Write raw and scale-standardized residuals, one row per observation."""
    if not fit.converged:
        raise DomainError("refusing to export residuals of a fit that did not converge")
    if not (fit.s_hat and fit.s_hat > 0):
        raise DomainError("fit has no positive scale estimate")
    raw = fit.residuals(data)
    path = Path(path)
    write_table(path, ["raw", "standardized"], np.column_stack([raw, raw / fit.s_hat]))
    return path


def fit_report(data: Dataset, ols: FitResult, mle: FitResult,
               record: Optional[CenteringRecord] = None) -> dict:
    """Side-by-side summary of both fits with residual diagnostics."""
    names = [data.column_name(j) for j in range(data.d)]
    out = {"n": data.n, "d": data.d, "columns": names, "ols": ols.as_dict(), "mle": mle.as_dict()}
    for key, fit in (("ols", ols), ("mle", mle)):
        resid = fit.residuals(data)
        out[key]["residual_median"] = float(np.median(resid))
        out[key]["residual_mean"] = float(np.mean(resid))
    if record is not None:
        out["centering"] = record.as_dict()
    return out
