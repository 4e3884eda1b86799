"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 numerical failure (an MLE that did
not converge, a quadrature that missed its tolerance, a failed batch).
Errors are also written to stderr as one JSON object.

Every JSON output carries the resolved configuration, the package version
and a timestamp.  The timestamp honours ``SOURCE_DATE_EPOCH`` so that runs
with a fixed seed can be made byte-identical.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .asymptotics import eta_curve
from .errors import BatchError, QuadratureError, ScaleMLEError
from .estimators import feasible_region, mle_fit, ols_fit
from .families import NoiseFamily
from .pipeline import (TabularSource, export_residuals, fit_report, load_and_center,
                       train_test_evaluate)
from .simulation import (FIGURE_COLUMNS, ExperimentConfig, dimension_sweep, estimate_are,
                         figure_rows, rows_to_csv, run_batch)

logger = logging.getLogger("scalemle")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
ETA_MISMATCH_TOL = 1e-6
DEFAULT_GAMMAS = "0.75,1,1.5,2,2.5,3,4,5,7,10"
DEFAULT_D_LIST = "3,5,8,10,15"


class ConvergenceFailure(ScaleMLEError):
    pass


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (datetime.fromtimestamp(int(epoch), tz=timezone.utc) if epoch
            else datetime.now(timezone.utc))
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def _meta(command: str, config: dict) -> dict:
    return {"artifact": "scalemle", "version": __version__, "timestamp": _timestamp(),
            "command": command, "config": config}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_list(text, cast=str) -> list:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [cast(v) for v in text]
    return [cast(v.strip()) for v in str(text).split(",") if v.strip()]


def _out_dir(path) -> Path:
    out = Path(path or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve(args, keys) -> dict:
    """JSON config file values overridden by any flag that was given."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ScaleMLEError("config file must hold a JSON object")
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _family_warnings(fam: NoiseFamily) -> None:
    if fam.family == 1 and fam.gamma < 1:
        print(f"warning: family 1 with gamma={fam.gamma:g} < 1 has a density that is not "
              "differentiable at 0; the smoothness assumptions behind the asymptotic "
              "theory fail and standard errors are indicative only", file=sys.stderr)
    lo, _ = fam.efficiency_domain()
    if fam.gamma <= lo:
        print(f"warning: gamma={fam.gamma:g} is outside the efficiency domain "
              f"(gamma > {lo:g}) of family {fam.family}; MLE standard errors are not reported",
              file=sys.stderr)


# ------------------------------------------------------------------ commands

SIM_KEYS = ("n", "d", "family", "gamma", "M", "seed", "threads")
SIM_DEFAULTS = {"n": 1000, "d": 5, "M": 100, "seed": 0}
FIT_KEYS = ("csv", "response", "columns", "exclude", "transform_exponent", "family", "gamma",
            "train_size", "replications", "seed")


def _experiment(cfg: dict) -> ExperimentConfig:
    raw = {**SIM_DEFAULTS, **{k: v for k, v in cfg.items() if k not in ("batches", "d_list")}}
    raw.setdefault("threads", os.cpu_count() or 1)
    for key in ("family", "gamma"):
        if key not in raw:
            raise ScaleMLEError(f"--{key} is required")
    return ExperimentConfig.from_dict(raw)


def cmd_simulate(args) -> int:
    cfg = _experiment(_resolve(args, SIM_KEYS))
    out = _out_dir(args.out)
    res = run_batch(cfg)
    meta = _meta("simulate", cfg.to_dict())
    (out / "replications.csv").write_text(res.records_csv(), encoding="utf-8")
    (out / "figure_data.csv").write_text(rows_to_csv(figure_rows(res)), encoding="utf-8")
    summary = res.summary_json(extra={"meta": meta})
    (out / "summary.json").write_text(summary + "\n", encoding="utf-8")
    sys.stdout.write(summary + "\n")
    return EXIT_OK


def cmd_are(args) -> int:
    raw = _resolve(args, SIM_KEYS + ("batches",))
    batches = int(raw.get("batches", 10))
    if "M" not in raw:
        raw["M"] = 50
    cfg = _experiment(raw)
    out = _out_dir(args.out)
    report = estimate_are(cfg, batches)
    payload = {"meta": _meta("are", {**cfg.to_dict(), "batches": batches}),
               "report": report.as_dict()}
    rows = [["mle", cfg.family, cfg.gamma, cfg.d, cfg.n, "eta_hat", v]
            for v in report.batch_estimates]
    if report.eta_closed is not None:
        rows.append(["theory", cfg.family, cfg.gamma, cfg.d, cfg.n, "eta", report.eta_closed])
    (out / "are.json").write_text(_dump(payload), encoding="utf-8")
    (out / "are_figure.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    sys.stdout.write(_dump(payload))
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw = _resolve(args, SIM_KEYS + ("d_list",))
    d_list = _csv_list(raw.pop("d_list", DEFAULT_D_LIST), int)
    raw.setdefault("d", min(d_list))
    cfg = _experiment(raw)
    out = _out_dir(args.out)
    table = dimension_sweep(cfg, d_list)
    cols = ["d", "mse_ols", "mse_mle", "median_ols", "median_mle"]
    (out / "sweep.csv").write_text(rows_to_csv([[r[c] for c in cols] for r in table], cols),
                                   encoding="utf-8")
    fig = []
    for r in table:
        fig.append(["ols", cfg.family, cfg.gamma, r["d"], cfg.n, "mean_sq_distance", r["mse_ols"]])
        fig.append(["mle", cfg.family, cfg.gamma, r["d"], cfg.n, "mean_sq_distance", r["mse_mle"]])
    (out / "sweep_figure.csv").write_text(rows_to_csv(fig, FIGURE_COLUMNS), encoding="utf-8")
    payload = {"meta": _meta("sweep", {**cfg.to_dict(), "d_list": d_list}), "table": table}
    (out / "sweep.json").write_text(_dump(payload), encoding="utf-8")
    sys.stdout.write(_dump(payload))
    return EXIT_OK


def cmd_efficiency(args) -> int:
    family = int(args.family)
    gammas = _csv_list(args.gamma or DEFAULT_GAMMAS, float)
    curve = eta_curve(family, gammas)
    for g, eta, quad in curve.rows:
        if eta is not None and abs(eta - quad) > ETA_MISMATCH_TOL:
            raise QuadratureError(f"closed form {eta!r} and quadrature {quad!r} disagree at "
                                  f"gamma={g!r}", quad, abs(eta - quad))
    text = curve.to_csv()
    if args.out:
        (_out_dir(args.out) / "efficiency.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _load(cfg: dict):
    if "csv" not in cfg:
        raise ScaleMLEError("a CSV path is required")
    for key in ("family", "gamma"):
        if key not in cfg:
            raise ScaleMLEError(f"--{key} is required")
    src = TabularSource(str(cfg["csv"]), cfg.get("response", "y"),
                        None if cfg.get("columns") is None else tuple(_csv_list(cfg["columns"])),
                        tuple(_csv_list(cfg.get("exclude")) or ()),
                        None if cfg.get("transform_exponent") is None
                        else float(cfg["transform_exponent"]))
    fam = NoiseFamily(int(cfg["family"]), float(cfg["gamma"]))
    data, record = load_and_center(src)
    return data, record, fam


def cmd_fit(args) -> int:
    cfg = _resolve(args, FIT_KEYS)
    data, record, fam = _load(cfg)
    _family_warnings(fam)
    out = _out_dir(args.out)
    ols = ols_fit(data)
    mle = mle_fit(data, fam)
    report = fit_report(data, ols, mle, record)
    if cfg.get("train_size") is not None:
        tt = train_test_evaluate(data, fam, int(cfg["train_size"]),
                                 int(cfg.get("replications", 500)), int(cfg.get("seed", 0)))
        report["train_test"] = tt.as_dict()
    report["meta"] = _meta("fit", cfg)
    (out / "fit_report.json").write_text(_dump(report), encoding="utf-8")
    if not mle.converged:
        raise ConvergenceFailure(f"MLE did not converge: {mle.message}")
    export_residuals(data, mle, out / "residuals.csv")
    sys.stdout.write(_dump(report))
    return EXIT_OK


def cmd_feasible_region(args) -> int:
    cfg = _resolve(args, FIT_KEYS + ("alpha",))
    data, record, fam = _load(cfg)
    out = _out_dir(args.out)
    region = feasible_region(data, fam, cfg.get("alpha"), seed=int(cfg.get("seed", 0)))
    mle = mle_fit(data, fam)
    payload = {"meta": _meta("feasible-region", cfg), "region": region.as_dict(),
               "mle": mle.as_dict(), "mle_inside": region.contains(mle.beta_hat, mle.s_hat)}
    (out / "feasible_region.json").write_text(_dump(payload), encoding="utf-8")
    sys.stdout.write(_dump(payload))
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scalemle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sim=True):
        p.add_argument("--config", help="JSON file with defaults; flags win")
        p.add_argument("--out", help="output directory (default: current directory)")
        p.add_argument("--family", type=int, choices=(1, 2, 3))
        p.add_argument("--gamma", type=float)
        p.add_argument("--seed", type=int)
        if sim:
            p.add_argument("--n", type=int)
            p.add_argument("--d", type=int)
            p.add_argument("--M", type=int)
            p.add_argument("--threads", type=int, help="worker processes (default: CPU count)")

    def tabular(p):
        p.add_argument("csv", nargs="?")
        p.add_argument("--response", help="response column (default: y)")
        p.add_argument("--columns", help="comma-separated predictor columns")
        p.add_argument("--exclude", help="comma-separated columns to ignore")
        p.add_argument("--transform-exponent", dest="transform_exponent", type=float)

    p = sub.add_parser("fit", help="OLS and MLE fits of a CSV dataset")
    common(p, sim=False)
    tabular(p)
    p.add_argument("--train-size", dest="train_size", type=int)
    p.add_argument("--replications", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("feasible-region", help="compact set containing a likelihood maximizer")
    common(p, sim=False)
    tabular(p)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_feasible_region)

    p = sub.add_parser("efficiency", help="asymptotic efficiency table over a shape grid")
    p.add_argument("--family", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--gamma", help=f"comma-separated shape grid (default: {DEFAULT_GAMMAS})")
    p.add_argument("--out")
    p.set_defaults(func=cmd_efficiency)

    p = sub.add_parser("simulate", help="one Monte-Carlo batch")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("are", help="empirical efficiency over several batches")
    common(p)
    p.add_argument("--batches", type=int)
    p.set_defaults(func=cmd_are)

    p = sub.add_parser("sweep", help="mean squared error against dimension")
    common(p)
    p.add_argument("--d-list", dest="d_list", help=f"comma-separated (default: {DEFAULT_D_LIST})")
    p.set_defaults(func=cmd_sweep)
    return parser


def _fail(exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConvergenceFailure, QuadratureError, BatchError) as exc:
        return _fail(exc, EXIT_NUMERIC)
    except (ScaleMLEError, ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        return _fail(exc, EXIT_INPUT)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
