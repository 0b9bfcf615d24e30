from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from scipy.interpolate import BSpline
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .errors import FglsError
from .funcdata import Curve, FunctionalSample, Grid


logger = logging.getLogger(__name__)


class BasisError(FglsError):
    pass


class BasisFamily(str, Enum):
    BSPLINE = "bspline"
    FPC = "fpc"

    @classmethod
    def parse(cls, value: "str | BasisFamily") -> "BasisFamily":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"bsp": cls.BSPLINE, "bspline": cls.BSPLINE, "b-spline": cls.BSPLINE, "pc": cls.FPC, "fpc": cls.FPC}
        if key not in aliases:
            raise BasisError(f"unknown basis family: {value!r} (expected fpc or bspline)")
        return aliases[key]


DEFAULT_K_RANGE = {
    BasisFamily.FPC: tuple(range(1, 9)),
    BasisFamily.BSPLINE: tuple(range(4, 12)),
}


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """K basis functions evaluated on a grid (``evals`` is K x M)."""

    family: BasisFamily
    grid: Grid
    evals: np.ndarray
    order: Optional[int] = None
    eigenvalues: Optional[np.ndarray] = field(default=None)
    knots: Optional[np.ndarray] = field(default=None)

    def __post_init__(self) -> None:
        ev = np.array(self.evals, dtype=np.float64, copy=True)
        if ev.ndim == 1:
            ev = ev[np.newaxis, :]
        if ev.ndim != 2 or ev.shape[0] < 1:
            raise BasisError("a basis needs at least one function")
        if ev.shape[1] != self.grid.m:
            raise BasisError(f"basis evaluated on {ev.shape[1]} points, grid has {self.grid.m}")
        if not np.all(np.isfinite(ev)):
            raise BasisError("basis evaluations must be finite")
        if self.family is BasisFamily.BSPLINE and self.order is not None and ev.shape[0] < self.order:
            raise BasisError(f"B-spline basis needs K >= order, got K={ev.shape[0]} order={self.order}")
        if self.family is BasisFamily.FPC:
            gram = (ev * self.grid.weights) @ ev.T
            if np.max(np.abs(gram - np.eye(ev.shape[0]))) > 1e-8:
                raise BasisError("FPC basis functions are not orthonormal under the grid quadrature")
        ev.setflags(write=False)
        object.__setattr__(self, "evals", ev)
        if self.eigenvalues is not None:
            lam = np.array(self.eigenvalues, dtype=np.float64, copy=True)
            lam.setflags(write=False)
            object.__setattr__(self, "eigenvalues", lam)

    @property
    def K(self) -> int:
        return int(self.evals.shape[0])

    @property
    def record(self) -> tuple[str, int]:
        return (self.family.value, self.K)

    def truncate(self, K: int) -> "BasisSpec":
        if K < 1 or K > self.K:
            raise BasisError(f"cannot truncate a {self.K}-element basis to K={K}")
        if self.family is not BasisFamily.FPC:
            raise BasisError("only FPC bases are nested; rebuild B-splines for a new K")
        lam = self.eigenvalues[:K] if self.eigenvalues is not None else None
        return BasisSpec(family=self.family, grid=self.grid, evals=self.evals[:K], eigenvalues=lam)

    def gram(self) -> np.ndarray:
        return (self.evals * self.grid.weights) @ self.evals.T


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    Z: np.ndarray
    coef: np.ndarray
    basis_x: BasisSpec
    basis_beta: BasisSpec

    @property
    def n(self) -> int:
        return int(self.Z.shape[0])


def bspline_basis(grid: Grid, K: int, order: int = 4) -> BasisSpec:
    if order < 2:
        raise BasisError(f"B-spline order must be >= 2, got {order}")
    if K < order:
        raise BasisError(f"B-spline basis needs K >= order, got K={K} order={order}")
    degree = order - 1
    interior = np.linspace(grid.a, grid.b, K - order + 2)[1:-1]
    knots = np.concatenate([np.full(order, grid.a), interior, np.full(order, grid.b)])
    # one spline per identity column gives every basis element at once
    evals = BSpline(knots, np.eye(K), degree, extrapolate=False)(grid.points).T
    return BasisSpec(family=BasisFamily.BSPLINE, grid=grid, evals=evals, order=order, knots=knots)


def _eigen_weighted(sample: FunctionalSample) -> tuple[np.ndarray, np.ndarray]:
    x = sample.values - sample.values.mean(axis=0)
    sw = np.sqrt(sample.grid.weights)
    xw = x * sw
    lam, vec = eigh(xw.T @ xw / sample.n)
    return lam[::-1], vec[:, ::-1]


def _rank_of(lam: np.ndarray, size: int) -> int:
    top = float(lam[0]) if lam.size else 0.0
    if top <= 0:
        return 0
    tol = top * size * np.finfo(np.float64).eps * 10
    return int(np.sum(lam > tol))


def attainable_rank(sample: FunctionalSample) -> int:
    lam, _ = _eigen_weighted(sample)
    return _rank_of(lam, max(sample.n, sample.grid.m))


def fpc_basis(sample: FunctionalSample, K: int) -> BasisSpec:
    """Leading K eigenfunctions of the sample covariance operator.

    The eigenproblem is solved on D^{1/2} Cov D^{1/2} (D = quadrature weights)
    and mapped back with D^{-1/2}, so the returned functions are orthonormal in
    the quadrature L2 inner product. Each function is signed so that its
    integral is nonnegative (value at t_1 when the integral vanishes).
    """
    if K < 1:
        raise BasisError(f"K must be >= 1, got {K}")
    lam, vec = _eigen_weighted(sample)
    rank = _rank_of(lam, max(sample.n, sample.grid.m))
    if K > rank:
        raise BasisError(f"K={K} exceeds the attainable rank {rank} of the sample")
    grid = sample.grid
    funcs = (vec[:, :K] / np.sqrt(grid.weights)[:, np.newaxis]).T
    for k in range(K):
        integral = float(np.sum(grid.weights * funcs[k]))
        if abs(integral) > 1e-12:
            flip = integral < 0
        else:
            flip = funcs[k, 0] < 0
        if flip:
            funcs[k] = -funcs[k]
    return BasisSpec(
        family=BasisFamily.FPC,
        grid=grid,
        evals=funcs,
        eigenvalues=np.clip(lam[:K], 0.0, None),
    )


def project(sample: FunctionalSample, basis: BasisSpec) -> np.ndarray:
    """Coefficient matrix C (n x K) of the sample in ``basis``."""
    sample.grid.require_same(basis.grid)
    weighted = basis.evals * basis.grid.weights
    inner = sample.values @ weighted.T
    if basis.family is BasisFamily.FPC:
        return inner
    gram = weighted @ basis.evals.T
    try:
        factor = cho_factor(gram, lower=True)
    except LinAlgError as e:
        raise BasisError(f"singular B-spline Gram matrix (K={basis.K}, M={basis.grid.m})") from e
    diag = np.diag(factor[0])
    if diag.min() ** 2 < 1e-12 * diag.max() ** 2:
        raise BasisError(f"singular B-spline Gram matrix (K={basis.K}, M={basis.grid.m})")
    return cho_solve(factor, inner.T).T


def assemble_design(C: np.ndarray, basis_x: BasisSpec, basis_beta: BasisSpec) -> DesignMatrix:
    basis_x.grid.require_same(basis_beta.grid)
    coef = np.asarray(C, dtype=np.float64)
    if coef.ndim == 1:
        coef = coef.reshape(-1, basis_x.K) if coef.size else np.zeros((0, basis_x.K))
    if coef.ndim != 2 or coef.shape[1] != basis_x.K:
        raise BasisError(f"coefficients have shape {coef.shape}, expected (n, {basis_x.K})")
    cross = (basis_x.evals * basis_x.grid.weights) @ basis_beta.evals.T
    return DesignMatrix(Z=coef @ cross, coef=coef, basis_x=basis_x, basis_beta=basis_beta)


def beta_curve(b: np.ndarray, basis_beta: BasisSpec) -> Curve:
    coef = np.ravel(np.asarray(b, dtype=np.float64))
    if coef.shape[0] != basis_beta.K:
        raise BasisError(f"{coef.shape[0]} coefficients for a {basis_beta.K}-element basis")
    return Curve(grid=basis_beta.grid, values=coef @ basis_beta.evals)


def basis_to_frame(basis: BasisSpec) -> pd.DataFrame:
    cols = [f"{t:.10g}" for t in basis.grid.points]
    index = pd.Index([f"{basis.family.value}_{k + 1}" for k in range(basis.K)], name="basis")
    return pd.DataFrame(basis.evals, index=index, columns=cols)
