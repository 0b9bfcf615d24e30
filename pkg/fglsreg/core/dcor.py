from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Union

import dcor
import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist, squareform

from .errors import FglsError
from .funcdata import FunctionalSample, ScalarResponse


logger = logging.getLogger(__name__)

SampleLike = Union[FunctionalSample, ScalarResponse, np.ndarray]


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    values: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self) -> None:
        d = np.array(self.values, dtype=np.float64, copy=True)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise FglsError(f"distance matrix must be square, got shape {d.shape}")
        if np.any(d < 0) or np.any(np.diag(d) != 0) or not np.allclose(d, d.T, rtol=0, atol=1e-12):
            raise FglsError("distance matrix must be symmetric, nonnegative, with zero diagonal")
        d.setflags(write=False)
        object.__setattr__(self, "values", d)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class DcorResult:
    R: float
    v2_xy: float
    v2_xx: float
    v2_yy: float
    degenerate: bool = False


def _rows(sample: SampleLike) -> tuple[np.ndarray, str]:
    if isinstance(sample, FunctionalSample):
        # weighted L2 between curves equals Euclidean distance after sqrt(w) scaling
        return sample.values * np.sqrt(sample.grid.weights), "l2"
    if isinstance(sample, ScalarResponse):
        return sample.y[:, np.newaxis], "euclidean"
    arr = np.asarray(sample, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, np.newaxis]
    if arr.ndim != 2:
        raise FglsError(f"sample must be a vector or an n x p matrix, got shape {arr.shape}")
    return arr, "euclidean"


def _checked_rows(sample: SampleLike) -> tuple[np.ndarray, str]:
    rows, metric = _rows(sample)
    if not np.all(np.isfinite(rows)):
        raise FglsError("sample contains non-finite values")
    return np.ascontiguousarray(rows, dtype=np.float64), metric


def distance_matrix(sample: SampleLike) -> DistanceMatrix:
    rows, metric = _checked_rows(sample)
    return DistanceMatrix(values=squareform(pdist(rows)), metric=metric)


def double_center(D: Union[DistanceMatrix, np.ndarray]) -> np.ndarray:
    a = np.asarray(D.values if isinstance(D, DistanceMatrix) else D, dtype=np.float64)
    return a - a.mean(axis=0)[np.newaxis, :] - a.mean(axis=1)[:, np.newaxis] + a.mean()


def _dcor_from_rows(x: np.ndarray, y: np.ndarray) -> DcorResult:
    if x.shape[0] != y.shape[0]:
        raise FglsError(f"sample size mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise FglsError("distance correlation needs n >= 2")
    stats = dcor.distance_stats_sqr(x, y, method="naive")
    v2_xy, v2_xx, v2_yy = (max(float(v), 0.0) for v in (stats.covariance_xy, stats.variance_x, stats.variance_y))
    if v2_xx * v2_yy <= 0:
        return DcorResult(R=0.0, v2_xy=v2_xy, v2_xx=v2_xx, v2_yy=v2_yy, degenerate=True)
    r = float(np.sqrt(max(float(stats.correlation_xy), 0.0)))
    return DcorResult(R=min(r, 1.0), v2_xy=v2_xy, v2_xx=v2_xx, v2_yy=v2_yy)


def _n_of(x: SampleLike) -> int:
    return _rows(x)[0].shape[0]


def distance_correlation(X: SampleLike, Y: SampleLike) -> DcorResult:
    """Biased (V-statistic) distance correlation; curves use the weighted L2 metric."""
    nx, ny = _n_of(X), _n_of(Y)
    if nx != ny:
        raise FglsError(f"sample size mismatch: {nx} vs {ny}")
    return _dcor_from_rows(_checked_rows(X)[0], _checked_rows(Y)[0])


def screening_table(candidates: Mapping[str, SampleLike], responses: Mapping[str, SampleLike]) -> pd.DataFrame:
    """Distance correlations: candidates x (candidates + responses)."""
    if not candidates:
        raise FglsError("screening needs at least one candidate")
    sizes = {name: _n_of(s) for name, s in {**candidates, **responses}.items()}
    if len(set(sizes.values())) > 1:
        detail = ", ".join(f"{k}={v}" for k, v in sizes.items())
        raise FglsError(f"sample size mismatch: {detail}")
    overlap = set(candidates) & set(responses)
    if overlap:
        raise FglsError(f"names used as both candidate and response: {', '.join(sorted(overlap))}")
    rows = {name: _checked_rows(s)[0] for name, s in {**candidates, **responses}.items()}
    cand = list(candidates)
    cols = cand + list(responses)
    table = pd.DataFrame(np.zeros((len(cand), len(cols))), index=pd.Index(cand, name="covariate"), columns=cols)
    for i, a in enumerate(cand):
        for j, b in enumerate(cols):
            if j < len(cand) and j < i:
                table.iloc[i, j] = table.iloc[j, i]
                continue
            res = _dcor_from_rows(rows[a], rows[b])
            if res.degenerate:
                logger.warning("degenerate sample in pair (%s, %s); R set to 0", a, b)
            table.iloc[i, j] = res.R
    return table
