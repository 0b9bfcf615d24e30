from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import pandas as pd

from ..bench.rolling import Panel
from ..core.errors import FglsError
from ..core.funcdata import FunctionalSample, Grid, ScalarResponse


logger = logging.getLogger(__name__)


class DataFormatError(FglsError):
    def __init__(self, path: Path, detail: str, line: Optional[int] = None, column: Optional[int] = None) -> None:
        self.path = Path(path)
        self.line = line
        self.column = column
        where = str(path)
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {detail}")


_PARSER_LINE = re.compile(r"line (\d+)")


def _read_table(path: Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(path, "file not found")
    try:
        frame = pd.read_csv(path, dtype=str, skip_blank_lines=False, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataFormatError(path, "empty file", line=1) from None
    except pd.errors.ParserError as e:
        m = _PARSER_LINE.search(str(e))
        raise DataFormatError(path, "wrong number of fields", line=int(m.group(1)) if m else None) from None
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame


def _numeric_block(path: Path, frame: pd.DataFrame, columns: list[str]) -> np.ndarray:
    """Parse ``columns`` as floats; any blank, non-numeric or non-finite cell is reported."""
    text = frame[columns]
    values = text.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce")).to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        col = list(frame.columns).index(columns[j]) + 1
        raw = text.iat[i, j]
        detail = "missing value" if pd.isna(raw) or str(raw).strip() == "" else f"invalid number {raw!r}"
        raise DataFormatError(path, f"{detail} in column {columns[j]!r}", line=int(i) + 2, column=col)
    return values


def _require_columns(path: Path, frame: pd.DataFrame, names: list[str]) -> None:
    missing = [n for n in names if n not in frame.columns]
    if missing:
        raise DataFormatError(path, f"missing column(s): {', '.join(missing)}", line=1)


def _grid_from_header(path: Path, header: list[str], offset: int) -> Grid:
    points = []
    for j, name in enumerate(header):
        try:
            points.append(float(name))
        except ValueError:
            raise DataFormatError(path, f"grid point header {name!r} is not a number", line=1, column=offset + j + 1) from None
    try:
        return Grid.from_points(points)
    except FglsError as e:
        raise DataFormatError(path, f"bad grid header: {e}", line=1) from None


def read_wide_curves(path: Path) -> FunctionalSample:
    """``id,t_1,...,t_M``: one curve per row, grid points in the header."""
    path = Path(path)
    frame = _read_table(path)
    if frame.columns[0] != "id":
        raise DataFormatError(path, "first column must be 'id'", line=1, column=1)
    point_cols = list(frame.columns[1:])
    if len(point_cols) < 2:
        raise DataFormatError(path, "need at least 2 grid point columns", line=1)
    grid = _grid_from_header(path, point_cols, offset=1)
    values = _numeric_block(path, frame, point_cols)
    ids = tuple(frame["id"].str.strip())
    logger.debug("read %d curves on %d grid points from %s", values.shape[0], grid.m, path)
    return FunctionalSample(grid=grid, values=values, ids=ids)


def read_long_curves(path: Path) -> FunctionalSample:
    """``id,t,value``: every id must be observed on the same grid."""
    path = Path(path)
    frame = _read_table(path)
    _require_columns(path, frame, ["id", "t", "value"])
    nums = _numeric_block(path, frame, ["t", "value"])
    long = pd.DataFrame({"id": frame["id"].str.strip(), "t": nums[:, 0], "value": nums[:, 1]})
    dup = long.duplicated(subset=["id", "t"])
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        raise DataFormatError(path, "duplicate (id, t) pair", line=i + 2)
    ids = list(dict.fromkeys(long["id"]))
    wide = long.pivot(index="id", columns="t", values="value").reindex(ids)
    if wide.isna().any().any():
        row = wide.index[wide.isna().any(axis=1)][0]
        raise DataFormatError(path, f"curve {row!r} is not observed on the common grid")
    grid = Grid.from_points(wide.columns.to_numpy(dtype=np.float64))
    return FunctionalSample(grid=grid, values=wide.to_numpy(dtype=np.float64), ids=tuple(ids))


def read_curves(path: Path, long_format: bool = False) -> FunctionalSample:
    return read_long_curves(path) if long_format else read_wide_curves(path)


def read_response(path: Path) -> tuple[ScalarResponse, Optional[tuple[str, ...]]]:
    """``id,y`` or a single ``y`` column."""
    path = Path(path)
    frame = _read_table(path)
    _require_columns(path, frame, ["y"])
    y = _numeric_block(path, frame, ["y"])[:, 0]
    ids = tuple(frame["id"].str.strip()) if "id" in frame.columns else None
    return ScalarResponse(y=y), ids


def read_locations(path: Path) -> np.ndarray:
    """Spatial coordinates: an optional ``id`` column plus one column per axis."""
    path = Path(path)
    frame = _read_table(path)
    axes = [c for c in frame.columns if c != "id"]
    if not axes:
        raise DataFormatError(path, "no coordinate columns", line=1)
    return _numeric_block(path, frame, axes)


def align_response(
    response: ScalarResponse,
    response_ids: Optional[tuple[str, ...]],
    sample: FunctionalSample,
) -> ScalarResponse:
    response.require_paired(sample)
    if response_ids is None or sample.ids is None or tuple(response_ids) == sample.ids:
        return response
    if sorted(response_ids) != sorted(sample.ids):
        raise FglsError("response ids do not match curve ids")
    position = {rid: i for i, rid in enumerate(response_ids)}
    return ScalarResponse(y=response.y[[position[i] for i in sample.ids]])


def read_panel(rates_path: Path, covariate_paths: Mapping[str, Path]) -> Panel:
    """Rates CSV ``group,week,rate`` plus one ``group,week,t_1..t_M`` CSV per covariate."""
    rates_path = Path(rates_path)
    frame = _read_table(rates_path)
    _require_columns(rates_path, frame, ["group", "week", "rate"])
    nums = _numeric_block(rates_path, frame, ["week", "rate"])
    groups = tuple(dict.fromkeys(frame["group"].str.strip()))
    weeks = np.unique(nums[:, 0])
    rates = pd.DataFrame({"group": frame["group"].str.strip(), "week": nums[:, 0], "rate": nums[:, 1]})
    table = rates.pivot_table(index="group", columns="week", values="rate", aggfunc="first").reindex(groups)
    if table.isna().any().any():
        raise DataFormatError(rates_path, "every group needs a rate for every week")
    covariates = {}
    grid: Optional[Grid] = None
    for name, cov_path in covariate_paths.items():
        cov_path = Path(cov_path)
        cov = _read_table(cov_path)
        _require_columns(cov_path, cov, ["group", "week"])
        point_cols = [c for c in cov.columns if c not in ("group", "week")]
        this_grid = _grid_from_header(cov_path, point_cols, offset=2)
        if grid is None:
            grid = this_grid
        else:
            grid.require_same(this_grid)
        values = _numeric_block(cov_path, cov, point_cols)
        week = _numeric_block(cov_path, cov, ["week"])[:, 0]
        key = {(g, w): i for i, (g, w) in enumerate(zip(cov["group"].str.strip(), week))}
        cube = np.empty((len(groups), weeks.shape[0], this_grid.m))
        for gi, g in enumerate(groups):
            for wi, w in enumerate(weeks):
                if (g, w) not in key:
                    raise DataFormatError(cov_path, f"no curve for group {g!r} week {w:g}")
                cube[gi, wi] = values[key[(g, w)]]
        covariates[name] = cube
    if grid is None:
        raise FglsError("a panel needs at least one functional covariate")
    return Panel(grid=grid, groups=groups, weeks=weeks, rates=table.to_numpy(dtype=np.float64), covariates=covariates)
