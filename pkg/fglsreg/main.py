from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .bench.rolling import contribution_quartiles, rolling_forecast, synthetic_panel
from .bench.simulation import run_simulation, run_study, study_configs
from .bench.tables import study_tables
from .core.covmodels import CovarianceSpec, parse_cov_spec
from .core.dcor import screening_table
from .core.errors import FglsError, NumericalError
from .core.fgls import FglsFit, predict, select_model
from .core.funcdata import FunctionalSample
from .storage.csv_io import align_response, read_curves, read_locations, read_panel, read_response
from .storage.reports import (
    prediction_records,
    records_frame,
    write_fit_report,
    write_manifest,
    write_rolling_report,
    write_sim_report,
    write_table,
)
from .utils.config import AppConfig, ConfigError, FitConfig, load_config, merge_overrides, parse_config
from .utils.logging_utils import setup_logging
from .utils.result_code import INPUT_ERROR, NUMERIC_ERROR, SUCCESS


logger = logging.getLogger(__name__)


def _csv_list(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _named_path(text: str) -> tuple[str, Path]:
    name, sep, path = text.partition("=")
    if not sep or not name.strip() or not path.strip():
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    return name.strip(), Path(path.strip())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="YAML or key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--log-level", default=None)


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--curves", type=Path, required=True, help="curves CSV (id,t_1..t_M)")
    p.add_argument("--long", action="store_true", help="curves CSV is in long format (id,t,value)")
    p.add_argument("--response", type=Path, required=True, help="response CSV (id,y or y)")
    p.add_argument("--basis", choices=("fpc", "bspline"), default=None)
    p.add_argument("--k-min", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--method", choices=("lm", "gls", "igls"), default=None)
    p.add_argument("--cov-family", default=None)
    p.add_argument("--theta", type=float, default=None, help="fix theta for gls instead of estimating it")
    p.add_argument("--theta-grid", default=None, help="comma separated theta values searched without refinement")
    p.add_argument("--theta-criterion", choices=("gls", "gccv"), default=None)
    p.add_argument("--k-search", choices=("exhaustive", "forward"), default=None)
    p.add_argument("--block-sizes", default=None, help="HETERO_BLOCK sizes, e.g. 50,50")
    p.add_argument("--locations", type=Path, default=None, help="SPATIAL coordinates CSV")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fgls-reg", description="Functional regression with correlated errors")
    sub = p.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="select and fit a functional linear model")
    _common(fit)
    _model_flags(fit)

    pred = sub.add_parser("predict", help="fit, then forecast new curves")
    _common(pred)
    _model_flags(pred)
    pred.add_argument("--new-curves", type=Path, required=True)
    pred.add_argument("--horizons", default=None, help="comma separated, e.g. 1,2")

    sim = sub.add_parser("simulate", help="Monte-Carlo benchmark")
    _common(sim)
    sim.add_argument("--scenario", choices=("A", "B", "a", "b"), default=None)
    sim.add_argument("--snr", type=float, default=None)
    sim.add_argument("--phi", type=float, default=None)
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--replicas", "-B", type=int, default=None)
    sim.add_argument("--basis", choices=("fpc", "bspline"), default=None)
    sim.add_argument("--methods", default=None, help="comma separated subset of lm,gls,igls")
    sim.add_argument("--workers", type=int, default=None)
    sim.add_argument("--k-search", choices=("exhaustive", "forward"), default=None)
    sim.add_argument("--k-selection", choices=("shared", "per_method"), default=None)
    sim.add_argument("--noise", choices=("marginal", "damped"), default=None, help="error variance calibration")
    sim.add_argument("--study", action="store_true", help="run every snr x phi cell")
    sim.add_argument("--study-bases", default=None, help="comma separated bases for --study")

    dc = sub.add_parser("dcor", help="distance-correlation screening table")
    _common(dc)
    dc.add_argument("--candidate", type=_named_path, action="append", required=True, metavar="NAME=PATH")
    dc.add_argument("--response", type=_named_path, action="append", default=[], metavar="NAME=PATH")
    dc.add_argument("--long", action="store_true")

    roll = sub.add_parser("roll", help="rolling-origin forecast comparison")
    _common(roll)
    roll.add_argument("--rates", type=Path, default=None, help="rates CSV (group,week,rate)")
    roll.add_argument("--covariate", type=_named_path, action="append", default=[], metavar="NAME=PATH")
    roll.add_argument("--synthetic", action="store_true", help="use a generated flu-like panel")
    roll.add_argument("--n-train", type=int, default=None)
    roll.add_argument("--n-origins", type=int, default=None)
    roll.add_argument("--horizons", default=None)
    roll.add_argument("--covariate-sets", default=None, help="comma separated, '+' joins covariates")
    return p


_SECTION = {"fit": "fit", "predict": "fit", "simulate": "simulate", "dcor": "fit", "roll": "roll"}


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    cmd = args.command
    if cmd in ("fit", "predict"):
        out = {
            "basis": args.basis,
            "k_min": args.k_min,
            "k_max": args.k_max,
            "order": args.order,
            "method": args.method,
            "cov_family": args.cov_family,
            "theta": args.theta,
            "theta_criterion": args.theta_criterion,
            "theta_grid": args.theta_grid,
            "k_search": args.k_search,
            "block_sizes": args.block_sizes,
        }
        if cmd == "predict":
            out["horizons"] = args.horizons
        return out
    if cmd == "simulate":
        return {
            "scenario": args.scenario.upper() if args.scenario else None,
            "snr": args.snr,
            "phi": args.phi,
            "n": args.n,
            "replicas": args.replicas,
            "basis": args.basis,
            "methods": args.methods,
            "max_workers": args.workers,
            "k_search": args.k_search,
            "k_selection": args.k_selection,
            "noise": args.noise,
            "seed": args.seed,
        }
    if cmd == "roll":
        return {
            "n_train": args.n_train,
            "n_origins": args.n_origins,
            "horizons": args.horizons,
            "covariate_sets": args.covariate_sets,
            "seed": args.seed,
        }
    return {}


def _cov_spec(fc: FitConfig, locations: Optional[Path]) -> CovarianceSpec:
    raw: Dict[str, Any] = {"family": fc.cov_family, "theta": fc.theta if fc.theta is not None else 0.0}
    if fc.cov_family == "spatial":
        if locations is None:
            raise ConfigError("cov_family=spatial needs --locations")
        raw["locations"] = read_locations(locations)
        if raw["theta"] <= 0:
            raw["theta"] = 1.0
    if fc.block_sizes is not None:
        raw["block_sizes"] = fc.block_sizes
    return parse_cov_spec(raw)


def _fit_from_args(args: argparse.Namespace, cfg: AppConfig) -> tuple[FglsFit, FunctionalSample]:
    sample = read_curves(args.curves, long_format=args.long)
    response, ids = read_response(args.response)
    y = align_response(response, ids, sample)
    fc = cfg.fit
    theta_grid = fc.theta_grid if fc.theta is None else (fc.theta,)
    fit = select_model(
        y,
        sample,
        family=fc.basis,
        k_values=fc.k_values,
        cov_spec=_cov_spec(fc, args.locations),
        method=fc.method,
        theta_grid=theta_grid,
        theta_criterion=fc.theta_criterion,
        order=fc.order,
        max_iter=fc.max_iter,
        tol=fc.tol,
        search=fc.k_search,
    )
    logger.info("selected %s K=%d theta=%.4f gccv=%.6g", fit.method.value, fit.basis_record[1], fit.theta_hat, fit.gccv)
    return fit, sample


def cmd_fit(args: argparse.Namespace, cfg: AppConfig) -> List[Path]:
    fit, sample = _fit_from_args(args, cfg)
    paths = write_fit_report(fit, args.out, args.format)
    if sample.n >= 4:
        contrib = contribution_quartiles(fit, sample)
        ids = list(sample.ids) if sample.ids is not None else list(range(sample.n))
        frame = pd.DataFrame({"id": ids, "v": contrib.v, "group": contrib.labels + 1})
        paths.append(write_table(frame, args.out, "contributions", "csv", index=False))
        means = pd.DataFrame(
            {f"q{q + 1}": c.values for q, c in enumerate(contrib.group_means)},
            index=pd.Index(sample.grid.points, name="t"),
        )
        paths.append(write_table(means, args.out, "quartile_means", "csv"))
    return paths


def cmd_predict(args: argparse.Namespace, cfg: AppConfig) -> List[Path]:
    fit, sample = _fit_from_args(args, cfg)
    new = read_curves(args.new_curves, long_format=args.long)
    horizons = list(cfg.fit.horizons)
    records = []
    if len(horizons) == 1:
        for i in range(new.n):
            pred = predict(fit, new.subset([i]), horizons)
            records.extend(r.model_copy(update={"row": i}) for r in prediction_records(pred))
    else:
        records = prediction_records(predict(fit, new, horizons))
    frame = records_frame(records)
    if new.ids is not None:
        frame.insert(0, "id", [new.ids[r.row] for r in records])
    return write_fit_report(fit, args.out, args.format) + [write_table(frame, args.out, "predictions", args.format, index=False)]


def cmd_simulate(args: argparse.Namespace, cfg: AppConfig) -> List[Path]:
    base = cfg.simulate
    if base.seed is None:
        raise ConfigError("simulate needs a seed (--seed or seed= in the config)")
    if args.study:
        bases = _csv_list(args.study_bases) if args.study_bases else None
        reports = run_study(study_configs(base, bases=bases))
    else:
        reports = [run_simulation(base)]
    cells = [c for r in reports for c in r.cells]
    failures = sum(r.failures for r in reports)
    if failures:
        logger.warning("%d replica fits failed and were excluded", failures)
    return write_sim_report(reports, study_tables(cells), args.out, args.format)


def cmd_dcor(args: argparse.Namespace, cfg: AppConfig) -> List[Path]:
    candidates = {name: read_curves(path, long_format=args.long) for name, path in args.candidate}
    responses = {name: read_response(path)[0] for name, path in args.response}
    table = screening_table(candidates, responses)
    return [write_table(table, args.out, "screening", args.format)]


def cmd_roll(args: argparse.Namespace, cfg: AppConfig) -> List[Path]:
    rc = cfg.roll
    if rc.seed is None:
        raise ConfigError("roll needs a seed (--seed or seed= in the config)")
    if args.synthetic:
        panel = synthetic_panel(rc.synthetic, rc.seed)
    else:
        if args.rates is None or not args.covariate:
            raise ConfigError("roll needs --rates and at least one --covariate NAME=PATH, or --synthetic")
        panel = read_panel(args.rates, dict(args.covariate))
    report = rolling_forecast(panel, rc)
    return write_rolling_report(report, args.out, args.format)


_HANDLERS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "dcor": cmd_dcor,
    "roll": cmd_roll,
}


def _manifest_config(args: argparse.Namespace, cfg: AppConfig) -> Dict[str, Any]:
    section = _SECTION[args.command]
    if section == "simulate":
        out = cfg.simulate.to_dict()
        out["study"] = bool(args.study)
        return out
    if section == "roll":
        return cfg.roll.to_dict()
    fc = cfg.fit
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(fc).items()}


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        section = _SECTION[args.command]
        raw = merge_overrides(load_config(args.config, section), section, _overrides(args))
        cfg = parse_config(raw)
        setup_logging(raw, args.log_level or cfg.logging.level)
        paths = _HANDLERS[args.command](args, cfg)
        seed = cfg.simulate.seed if section == "simulate" else cfg.roll.seed if section == "roll" else args.seed
        write_manifest(args.out, args.command, _manifest_config(args, cfg), seed, paths)
    except NumericalError as e:
        print(f"{NUMERIC_ERROR[1]}: {e}", file=sys.stderr)
        return NUMERIC_ERROR[0]
    except (FglsError, ConfigError, FileNotFoundError, ValueError) as e:
        print(f"{INPUT_ERROR[1]}: {e}", file=sys.stderr)
        return INPUT_ERROR[0]
    except np.linalg.LinAlgError as e:
        print(f"{NUMERIC_ERROR[1]}: {e}", file=sys.stderr)
        return NUMERIC_ERROR[0]
    return SUCCESS[0]


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
