from __future__ import annotations

import json
import logging
import platform
from pathlib import Path
from typing import Any, Dict, Iterable, Literal, Optional

import numpy as np
import pandas as pd
import scipy

from .. import __version__
from ..core.basis import basis_to_frame
from ..core.fgls import FglsFit, Prediction, beta_table, fit_summary
from ..utils.models import PredictionRecord, ReplicaRecord, RollingReport, RunManifest, SimReport


logger = logging.getLogger(__name__)

OutputFormat = Literal["csv", "markdown"]
CSV_FLOAT = "%.6g"
MD_FLOAT = ".2f"


def write_table(frame: pd.DataFrame, out_dir: Path, stem: str, fmt: OutputFormat = "csv", index: bool = True) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "markdown":
        path = out_dir / f"{stem}.md"
        text = frame.to_markdown(index=index, floatfmt=MD_FLOAT) if not frame.empty else "(empty)"
        path.write_text(text + "\n", encoding="utf-8")
    else:
        path = out_dir / f"{stem}.csv"
        frame.to_csv(path, index=index, float_format=CSV_FLOAT, lineterminator="\n")
    logger.info("wrote %s", path)
    return path


def summary_frame(fit: FglsFit) -> pd.DataFrame:
    summary = fit_summary(fit).model_dump()
    summary["covariates"] = "+".join(summary["covariates"])
    return pd.DataFrame([summary])


def write_fit_report(fit: FglsFit, out_dir: Path, fmt: OutputFormat = "csv") -> list[Path]:
    paths = [write_table(summary_frame(fit), out_dir, "fit_summary", fmt, index=False)]
    paths.append(write_table(beta_table(fit), out_dir, "beta", "csv", index=False))
    for term in fit.terms:
        stem = "basis" if len(fit.terms) == 1 else f"basis_{term.name}"
        paths.append(write_table(basis_to_frame(term.basis), out_dir, stem, "csv"))
    return paths


def prediction_records(pred: Prediction) -> list[PredictionRecord]:
    return [
        PredictionRecord(
            row=j,
            horizon=h,
            point=float(pred.point[j]),
            variance=float(pred.variance[j, j]),
            regression_part=float(pred.regression_part[j]),
            correction_part=float(pred.correction_part[j]),
            variance_clipped=pred.variance_clipped,
        )
        for j, h in enumerate(pred.horizons)
    ]


def records_frame(records: Iterable[Any]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in records])


def replicas_frame(records: Iterable[ReplicaRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        row = r.model_dump(exclude={"prediction_error"})
        for h, v in sorted(r.prediction_error.items()):
            row[f"sq_err_h{h}"] = v
        rows.append(row)
    return pd.DataFrame(rows)


def write_sim_report(reports: list[SimReport], tables: Dict[str, pd.DataFrame], out_dir: Path, fmt: OutputFormat = "csv") -> list[Path]:
    paths = [write_table(frame, out_dir, stem, fmt) for stem, frame in tables.items()]
    frames = []
    for report in reports:
        frame = replicas_frame(report.records)
        for key in ("scenario", "basis", "snr", "phi"):
            frame.insert(0, key, report.config[key])
        frames.append(frame)
    paths.append(write_table(pd.concat(frames, ignore_index=True), out_dir, "replicas", "csv", index=False))
    return paths


def rolling_frames(report: RollingReport) -> tuple[pd.DataFrame, pd.DataFrame]:
    rows = []
    for row in report.rows:
        rec = {"covariates": row.covariates, **row.mspe}
        rec["mean_theta"] = row.mean_theta
        rec["origins_used"] = row.origins_used
        rec["origins_skipped"] = row.origins_skipped
        rows.append(rec)
    return pd.DataFrame(rows).set_index("covariates"), records_frame(report.errors)


def write_rolling_report(report: RollingReport, out_dir: Path, fmt: OutputFormat = "csv") -> list[Path]:
    table, errors = rolling_frames(report)
    return [
        write_table(table, out_dir, "rolling", fmt),
        write_table(errors, out_dir, "rolling_errors", "csv", index=False),
    ]


def library_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "fglsreg": __version__,
    }


def write_manifest(
    out_dir: Path,
    subcommand: str,
    config: Dict[str, Any],
    seed: Optional[int],
    outputs: Iterable[Path],
) -> Path:
    manifest = RunManifest(
        subcommand=subcommand,
        config=config,
        seed=seed,
        versions=library_versions(),
        outputs=sorted(p.name for p in outputs),
    )
    path = out_dir / "manifest.json"
    out_dir.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
