from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import FglsError, GridMismatchError


SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    d = np.diff(points)
    w = np.zeros(points.shape[0], dtype=np.float64)
    w[:-1] += d / 2.0
    w[1:] += d / 2.0
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Evaluation points t_1 < ... < t_M on [a, b] with quadrature weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        pts = _frozen(np.ravel(self.points))
        w = _frozen(np.ravel(self.weights))
        if pts.shape[0] < 2:
            raise FglsError(f"grid needs at least 2 points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise FglsError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise FglsError("grid points must be strictly increasing")
        if w.shape != pts.shape:
            raise FglsError(f"weights length {w.shape[0]} != points length {pts.shape[0]}")
        if np.any(w < 0):
            raise FglsError("quadrature weights must be nonnegative")
        span = pts[-1] - pts[0]
        if abs(w.sum() - span) > 1e-10 * max(span, 1.0):
            raise FglsError(f"weights sum {w.sum()!r} does not match interval length {span!r}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_points(cls, points: Iterable[float]) -> "Grid":
        pts = np.asarray(list(points), dtype=np.float64)
        if pts.ndim != 1 or pts.shape[0] < 2:
            raise FglsError("grid needs a 1-d array of at least 2 points")
        if np.any(np.diff(pts) <= 0):
            raise FglsError("grid points must be strictly increasing")
        return cls(points=pts, weights=trapezoid_weights(pts))

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0, m: int = 101) -> "Grid":
        return cls.from_points(np.linspace(a, b, int(m)))

    @property
    def m(self) -> int:
        return int(self.points.shape[0])

    @property
    def a(self) -> float:
        return float(self.points[0])

    @property
    def b(self) -> float:
        return float(self.points[-1])

    def same_as(self, other: "Grid") -> bool:
        if self is other:
            return True
        return (
            self.m == other.m
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    def require_same(self, other: "Grid") -> None:
        if not self.same_as(other):
            raise GridMismatchError(f"M={self.m} on [{self.a}, {self.b}] vs M={other.m} on [{other.a}, {other.b}]")


@dataclass(frozen=True, eq=False)
class Curve:
    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = _frozen(np.ravel(self.values))
        if v.shape[0] != self.grid.m:
            raise FglsError(f"curve has {v.shape[0]} values, grid has {self.grid.m} points")
        if not np.all(np.isfinite(v)):
            raise FglsError("curve contains non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Curve":
        return cls(grid=grid, values=np.full(grid.m, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Curve":
        return cls(grid=grid, values=np.asarray(fn(grid.points), dtype=np.float64))


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    """n curves evaluated on a shared grid (row i = curve i)."""

    grid: Grid
    values: np.ndarray
    ids: Optional[tuple[str, ...]] = field(default=None)

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim == 1 and v.shape[0] == self.grid.m:
            v = v[np.newaxis, :]
        if v.ndim != 2:
            raise FglsError(f"sample values must be an n x M matrix, got shape {v.shape}")
        if v.shape[1] != self.grid.m:
            raise FglsError(f"sample rows have {v.shape[1]} values, grid has {self.grid.m} points")
        bad = ~np.isfinite(v)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise FglsError(f"non-finite value in curve {int(i)} at grid point {int(j)}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.ids is not None:
            ids = tuple(str(x) for x in self.ids)
            if len(ids) != v.shape[0]:
                raise FglsError(f"{len(ids)} ids for {v.shape[0]} curves")
            object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def curve(self, i: int) -> Curve:
        return Curve(grid=self.grid, values=self.values[i])

    def subset(self, rows: Sequence[int] | np.ndarray | slice) -> "FunctionalSample":
        idx = np.arange(self.n)[rows]
        ids = tuple(self.ids[i] for i in idx) if self.ids is not None else None
        return FunctionalSample(grid=self.grid, values=self.values[idx], ids=ids)

    def inner_products(self, g: Curve) -> np.ndarray:
        """Vector of <X_i, g> for every curve in the sample."""
        self.grid.require_same(g.grid)
        return self.values @ (self.grid.weights * g.values)

    def map_values(self, fn) -> "FunctionalSample":
        return FunctionalSample(grid=self.grid, values=fn(self.values), ids=self.ids)

    @classmethod
    def stack(cls, samples: Sequence["FunctionalSample"]) -> "FunctionalSample":
        if not samples:
            raise FglsError("nothing to stack")
        grid = samples[0].grid
        for s in samples[1:]:
            grid.require_same(s.grid)
        return cls(grid=grid, values=np.vstack([s.values for s in samples]))


@dataclass(frozen=True, eq=False)
class ScalarResponse:
    y: np.ndarray

    def __post_init__(self) -> None:
        y = _frozen(np.ravel(self.y))
        if not np.all(np.isfinite(y)):
            raise FglsError("response contains non-finite values")
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    def require_paired(self, sample: FunctionalSample) -> None:
        if self.n != sample.n:
            raise FglsError(f"response/covariate length mismatch: {self.n} responses, {sample.n} curves")


def inner_product(f: Curve, g: Curve) -> float:
    f.grid.require_same(g.grid)
    return float(np.sum(f.grid.weights * f.values * g.values))


def norm(f: Curve) -> float:
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def center(sample: FunctionalSample) -> tuple[FunctionalSample, Curve]:
    if sample.n < 1:
        raise FglsError("cannot center an empty sample")
    mean = sample.values.mean(axis=0)
    centered = FunctionalSample(grid=sample.grid, values=sample.values - mean, ids=sample.ids)
    return centered, Curve(grid=sample.grid, values=mean)


def simulate_wiener(n: int, grid: Grid, rng_seed: SeedLike) -> FunctionalSample:
    """Standard Brownian paths on ``grid``; identical seeds give identical samples."""
    if n < 1:
        raise FglsError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(rng_seed)
    dt = np.diff(grid.points)
    steps = rng.standard_normal((n, grid.m - 1)) * np.sqrt(dt)
    start = np.zeros((n, 1))
    if grid.a > 0:
        # path observed from t_1 > 0: W(t_1) ~ N(0, t_1)
        start = rng.standard_normal((n, 1)) * np.sqrt(grid.a)
    values = np.hstack([start, start + np.cumsum(steps, axis=1)])
    return FunctionalSample(grid=grid, values=values)
