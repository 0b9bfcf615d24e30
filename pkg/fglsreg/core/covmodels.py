from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular, toeplitz
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import FglsError, NumericalError


logger = logging.getLogger(__name__)

AR1_CLAMP = 0.99


class CovFamily(str, Enum):
    IDENTITY = "identity"
    EQUICORRELATED = "equicorrelated"
    HETERO_BLOCK = "hetero_block"
    AR1 = "ar1"
    SPATIAL = "spatial"

    @classmethod
    def parse(cls, value: "str | CovFamily") -> "CovFamily":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"iid": cls.IDENTITY, "equi": cls.EQUICORRELATED, "block": cls.HETERO_BLOCK, "exp": cls.SPATIAL}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise FglsError(f"unknown covariance family: {value!r} (expected one of {names})") from None


class NotPositiveDefiniteError(NumericalError):
    def __init__(self, message: str, family: Optional[CovFamily] = None, parameter: Optional[str] = None) -> None:
        super().__init__(message)
        self.family = family
        self.parameter = parameter


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Error covariance Omega = sigma2 * Sigma(theta).

    ``theta`` is the correlation parameter of EQUICORRELATED and AR1 and the
    exponential range of SPATIAL. HETERO_BLOCK is parametrized by
    ``block_variances``/``block_sizes`` instead.
    """

    family: CovFamily = CovFamily.IDENTITY
    theta: float = 0.0
    sigma2: float = 1.0
    block_variances: Optional[tuple[float, ...]] = None
    block_sizes: Optional[tuple[int, ...]] = None
    locations: Optional[np.ndarray] = field(default=None)

    def __post_init__(self) -> None:
        fam = CovFamily.parse(self.family)
        object.__setattr__(self, "family", fam)
        theta = float(self.theta)
        object.__setattr__(self, "theta", theta)
        if not np.isfinite(theta):
            raise FglsError("theta must be finite")
        if not self.sigma2 > 0:
            raise FglsError(f"sigma2 must be > 0, got {self.sigma2}")
        if fam is CovFamily.AR1 and not abs(theta) < 1:
            raise NotPositiveDefiniteError(f"AR1 requires |theta| < 1, got theta={theta}", fam, "theta")
        if fam is CovFamily.EQUICORRELATED and not theta < 1:
            raise NotPositiveDefiniteError(f"EQUICORRELATED requires theta < 1, got theta={theta}", fam, "theta")
        if fam is CovFamily.SPATIAL:
            if not theta > 0:
                raise NotPositiveDefiniteError(f"SPATIAL range must be > 0, got {theta}", fam, "range")
            if self.locations is None:
                raise FglsError("SPATIAL covariance needs locations")
            loc = np.array(self.locations, dtype=np.float64, copy=True)
            if loc.ndim == 1:
                loc = loc[:, np.newaxis]
            loc.setflags(write=False)
            object.__setattr__(self, "locations", loc)
        if fam is CovFamily.HETERO_BLOCK:
            if not self.block_sizes:
                raise FglsError("HETERO_BLOCK covariance needs block_sizes")
            sizes = tuple(int(s) for s in self.block_sizes)
            variances = tuple(float(v) for v in (self.block_variances or (1.0,) * len(sizes)))
            if len(variances) != len(sizes):
                raise FglsError(f"{len(variances)} block variances for {len(sizes)} blocks")
            if any(s < 1 for s in sizes):
                raise FglsError("block sizes must be >= 1")
            if any(not v > 0 for v in variances):
                raise NotPositiveDefiniteError("HETERO_BLOCK variances must be > 0", fam, "block_variances")
            object.__setattr__(self, "block_sizes", sizes)
            object.__setattr__(self, "block_variances", variances)

    def with_theta(self, theta: float) -> "CovarianceSpec":
        return replace(self, theta=float(theta))

    @property
    def label(self) -> str:
        if self.family is CovFamily.IDENTITY:
            return "identity"
        if self.family is CovFamily.HETERO_BLOCK:
            return f"hetero_block(p={len(self.block_sizes)})"
        name = "range" if self.family is CovFamily.SPATIAL else "theta"
        return f"{self.family.value}({name}={self.theta:.4g})"


@dataclass(frozen=True)
class ThetaEstimate:
    spec: CovarianceSpec
    theta: float
    degenerate: bool = False


class Whitener:
    """Applies L^{-1} (Sigma = L L^T) to vectors or column blocks."""

    def __init__(
        self,
        n: int,
        chol: Optional[np.ndarray] = None,
        ar1_theta: Optional[float] = None,
        diag: Optional[np.ndarray] = None,
    ) -> None:
        self.n = int(n)
        self._chol = chol
        self._theta = ar1_theta
        self._sd = np.sqrt(diag) if diag is not None else None

    @property
    def kind(self) -> str:
        if self._theta is not None:
            return "ar1"
        if self._sd is not None:
            return "diagonal"
        if self._chol is not None:
            return "cholesky"
        return "identity"

    def _check(self, v: np.ndarray) -> np.ndarray:
        arr = np.asarray(v, dtype=np.float64)
        if arr.shape[0] != self.n:
            raise FglsError(f"whitener built for n={self.n}, got {arr.shape[0]} rows")
        return arr

    def apply(self, v: np.ndarray) -> np.ndarray:
        arr = self._check(v)
        if self._theta is not None:
            th = self._theta
            out = np.array(arr, dtype=np.float64, copy=True)
            # Prais-Winsten rows: exact inverse Cholesky factor of theta^|i-j|
            out[1:] = (arr[1:] - th * arr[:-1]) / np.sqrt(1.0 - th * th)
            return out
        if self._sd is not None:
            return arr / (self._sd if arr.ndim == 1 else self._sd[:, np.newaxis])
        if self._chol is not None:
            return solve_triangular(self._chol, arr, lower=True, check_finite=False)
        return np.array(arr, copy=True)

    def apply_transpose(self, u: np.ndarray) -> np.ndarray:
        """L^{-T} u."""
        arr = self._check(u)
        if self._theta is not None:
            th = self._theta
            s = np.sqrt(1.0 - th * th)
            out = arr / s
            out[0] = arr[0]
            out[:-1] -= (th / s) * arr[1:]
            return out
        if self._sd is not None:
            return arr / (self._sd if arr.ndim == 1 else self._sd[:, np.newaxis])
        if self._chol is not None:
            return solve_triangular(self._chol, arr, lower=True, trans="T", check_finite=False)
        return np.array(arr, copy=True)

    def solve(self, v: np.ndarray) -> np.ndarray:
        """Sigma^{-1} v."""
        return self.apply_transpose(self.apply(v))

    @property
    def matrix(self) -> np.ndarray:
        return self.apply(np.eye(self.n))


def build_sigma(spec: CovarianceSpec, n: int) -> np.ndarray:
    """Correlation/covariance matrix Sigma(theta) of size n x n (without sigma2)."""
    if n < 1:
        raise FglsError(f"n must be >= 1, got {n}")
    fam = spec.family
    if fam is CovFamily.IDENTITY:
        return np.eye(n)
    if fam is CovFamily.AR1:
        return toeplitz(spec.theta ** np.arange(n, dtype=np.float64))
    if fam is CovFamily.EQUICORRELATED:
        lower = -1.0 / (n - 1) if n > 1 else -np.inf
        if not spec.theta > lower:
            raise NotPositiveDefiniteError(
                f"EQUICORRELATED theta={spec.theta} not in (-1/(n-1), 1) = ({lower:.6g}, 1) for n={n}",
                fam,
                "theta",
            )
        sigma = np.full((n, n), spec.theta)
        np.fill_diagonal(sigma, 1.0)
        return sigma
    if fam is CovFamily.HETERO_BLOCK:
        if sum(spec.block_sizes) != n:
            raise FglsError(f"block sizes sum to {sum(spec.block_sizes)}, expected n={n}")
        return np.diag(np.repeat(np.asarray(spec.block_variances), spec.block_sizes))
    loc = spec.locations
    if loc.shape[0] != n:
        raise FglsError(f"{loc.shape[0]} spatial locations for n={n}")
    sigma = np.exp(-squareform(pdist(loc)) / spec.theta)
    try:
        cholesky(sigma, lower=True)
    except LinAlgError as e:
        raise NotPositiveDefiniteError(
            f"SPATIAL correlation with range={spec.theta} is not positive definite (duplicate locations?)",
            fam,
            "range",
        ) from e
    return sigma


def build_omega(spec: CovarianceSpec, n: int) -> np.ndarray:
    return spec.sigma2 * build_sigma(spec, n)


def whiten(sigma: np.ndarray) -> Whitener:
    s = np.asarray(sigma, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise FglsError(f"covariance must be square, got shape {s.shape}")
    try:
        chol = cholesky(s, lower=True)
    except LinAlgError as e:
        raise NotPositiveDefiniteError("matrix not positive definite") from e
    return Whitener(s.shape[0], chol=chol)


def whitener_for(spec: CovarianceSpec, n: int) -> Whitener:
    if spec.family is CovFamily.IDENTITY:
        return Whitener(n)
    if spec.family is CovFamily.AR1:
        if spec.theta == 0.0:
            return Whitener(n)
        return Whitener(n, ar1_theta=spec.theta)
    if spec.family is CovFamily.HETERO_BLOCK:
        return Whitener(n, diag=np.diag(build_sigma(spec, n)).copy())
    return whiten(build_sigma(spec, n))


def innovation_scale(spec: CovarianceSpec) -> float:
    """Factor turning r' Sigma^{-1} r into the innovation sum of squares."""
    if spec.family is CovFamily.AR1:
        return 1.0 - spec.theta * spec.theta
    return 1.0


def _is_constant(e: np.ndarray) -> bool:
    spread = float(np.ptp(e))
    return spread <= 1e-14 * max(1.0, float(np.max(np.abs(e))))


def _spatial_range(e: np.ndarray, locations: np.ndarray, n_bins: int = 10) -> float:
    d = pdist(locations)
    z = (e - e.mean()) / e.std()
    prod = (z[:, np.newaxis] * z[np.newaxis, :])[np.triu_indices(e.shape[0], k=1)]
    dmax = float(d.max())
    if dmax <= 0:
        raise FglsError("SPATIAL estimation needs distinct locations")
    edges = np.linspace(0.0, dmax / 2.0, n_bins + 1)
    which = np.digitize(d, edges[1:-1])
    keep = d <= edges[-1]
    centers, emp = [], []
    for k in range(n_bins):
        mask = keep & (which == k)
        if mask.any():
            centers.append(d[mask].mean())
            emp.append(prod[mask].mean())
    h = np.asarray(centers)
    c = np.asarray(emp)

    def loss(r: float) -> float:
        return float(np.sum((c - np.exp(-h / r)) ** 2))

    res = minimize_scalar(loss, bounds=(1e-3 * dmax, 10.0 * dmax), method="bounded")
    return float(res.x)


def estimate_theta(residuals: np.ndarray, spec: CovarianceSpec) -> ThetaEstimate:
    e = np.ravel(np.asarray(residuals, dtype=np.float64))
    n = e.shape[0]
    if n < 3:
        raise FglsError(f"estimate_theta needs n >= 3 residuals, got {n}")
    fam = spec.family
    if fam is CovFamily.IDENTITY:
        return ThetaEstimate(spec=spec, theta=0.0)
    if _is_constant(e):
        logger.debug("constant residuals, theta set to 0")
        if fam is CovFamily.HETERO_BLOCK:
            ones = replace(spec, block_variances=(1.0,) * len(spec.block_sizes))
            return ThetaEstimate(spec=ones, theta=0.0, degenerate=True)
        if fam is CovFamily.SPATIAL:
            return ThetaEstimate(spec=spec, theta=spec.theta, degenerate=True)
        return ThetaEstimate(spec=spec.with_theta(0.0), theta=0.0, degenerate=True)
    if fam is CovFamily.AR1:
        d = e - e.mean()
        rho = float(np.dot(d[1:], d[:-1]) / np.dot(d, d))
        theta = float(np.clip(rho, -AR1_CLAMP, AR1_CLAMP))
        return ThetaEstimate(spec=spec.with_theta(theta), theta=theta)
    if fam is CovFamily.EQUICORRELATED:
        ss = float(np.dot(e, e))
        rho = (float(e.sum()) ** 2 - ss) / ((n - 1) * ss)
        lower = -AR1_CLAMP / (n - 1)
        theta = float(np.clip(rho, lower, AR1_CLAMP))
        return ThetaEstimate(spec=spec.with_theta(theta), theta=theta)
    if fam is CovFamily.HETERO_BLOCK:
        if sum(spec.block_sizes) != n:
            raise FglsError(f"block sizes sum to {sum(spec.block_sizes)}, expected n={n}")
        bounds = np.cumsum((0,) + spec.block_sizes)
        variances = []
        degenerate = False
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            v = float(np.mean(e[lo:hi] ** 2))
            if v <= 0:
                degenerate = True
                v = 1.0
            variances.append(v)
        return ThetaEstimate(spec=replace(spec, block_variances=tuple(variances)), theta=0.0, degenerate=degenerate)
    if spec.locations.shape[0] != n:
        raise FglsError(f"{spec.locations.shape[0]} spatial locations for n={n}")
    r = _spatial_range(e, spec.locations)
    return ThetaEstimate(spec=spec.with_theta(r), theta=r)


def cross_cov(
    spec: CovarianceSpec,
    n: int,
    horizons: Sequence[int],
    new_locations: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Return (Delta, Sigma_0): Cov(eps_new, eps) and Cov(eps_new, eps_new), both without sigma2."""
    h = np.asarray(list(horizons), dtype=np.int64)
    if h.ndim != 1 or h.size == 0:
        raise FglsError("at least one horizon is required")
    if np.any(h <= 0):
        raise FglsError(f"horizons must be >= 1, got {h.tolist()}")
    q = h.shape[0]
    if spec.family is CovFamily.AR1:
        theta = spec.theta
        idx = np.arange(1, n + 1)
        delta = theta ** (n + h[:, np.newaxis] - idx[np.newaxis, :]).astype(np.float64)
        sigma0 = theta ** np.abs(h[:, np.newaxis] - h[np.newaxis, :]).astype(np.float64)
        return delta, sigma0
    if spec.family is CovFamily.SPATIAL:
        if new_locations is None:
            raise FglsError("SPATIAL prediction needs the new locations")
        new = np.asarray(new_locations, dtype=np.float64)
        if new.ndim == 1:
            new = new[:, np.newaxis]
        if new.shape[0] != q:
            raise FglsError(f"{new.shape[0]} new locations for {q} horizons")
        delta = np.exp(-cdist(new, spec.locations) / spec.theta)
        sigma0 = np.exp(-cdist(new, new) / spec.theta)
        return delta, sigma0
    return np.zeros((q, n)), np.eye(q)


def _floats(value: Any) -> tuple[float, ...]:
    if isinstance(value, str):
        return tuple(float(v) for v in value.replace(";", ",").split(",") if v.strip())
    return tuple(float(v) for v in value)


def parse_cov_spec(raw: Mapping[str, Any]) -> CovarianceSpec:
    """Build a spec from ``family=ar1 theta=0.9``-style settings."""
    known = {"family", "theta", "range", "sigma2", "block_sizes", "block_variances", "locations"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise FglsError(f"unknown covariance setting(s): {', '.join(unknown)}")
    family = CovFamily.parse(raw.get("family", "identity"))
    default_theta = 1.0 if family is CovFamily.SPATIAL else 0.0
    theta_raw = raw.get("range", raw.get("theta", default_theta))
    try:
        theta = float(theta_raw)
        sigma2 = float(raw.get("sigma2", 1.0))
        sizes = tuple(int(v) for v in _floats(raw["block_sizes"])) if raw.get("block_sizes") is not None else None
        variances = _floats(raw["block_variances"]) if raw.get("block_variances") is not None else None
    except (TypeError, ValueError) as e:
        raise FglsError(f"invalid covariance setting: {e}") from e
    locations = raw.get("locations")
    if isinstance(locations, str):
        locations = np.asarray(_floats(locations))
    return CovarianceSpec(
        family=family,
        theta=theta,
        sigma2=sigma2,
        block_sizes=sizes,
        block_variances=variances,
        locations=locations,
    )
