from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Literal, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.linalg import eigh, lstsq, qr, solve_triangular
from scipy.optimize import minimize_scalar

from .basis import (
    DEFAULT_K_RANGE,
    BasisError,
    BasisFamily,
    BasisSpec,
    assemble_design,
    attainable_rank,
    beta_curve,
    bspline_basis,
    fpc_basis,
    project,
)
from .covmodels import (
    CovarianceSpec,
    CovFamily,
    Whitener,
    build_sigma,
    cross_cov,
    estimate_theta,
    innovation_scale,
    whiten,
    whitener_for,
)
from .errors import FglsError, NumericalError
from .funcdata import Curve, FunctionalSample, ScalarResponse, center
from ..utils.models import FitSummary


logger = logging.getLogger(__name__)

ThetaCriterion = Literal["gls", "gccv"]
KSearch = Literal["exhaustive", "forward"]
Samples = Union[FunctionalSample, Mapping[str, FunctionalSample]]

THETA_BOUND = 0.95
THETA_STEP = 0.05


class Method(str, Enum):
    LM = "lm"
    GLS = "gls"
    IGLS = "igls"

    @classmethod
    def parse(cls, value: "str | Method") -> "Method":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise FglsError(f"unknown method: {value!r} (expected lm, gls or igls)") from None


class RankDeficiencyError(NumericalError):
    def __init__(self, columns: Sequence[int], rank: int, k: int) -> None:
        self.columns = tuple(int(c) for c in columns)
        self.rank = rank
        super().__init__(
            f"design matrix is rank deficient after whitening (rank {rank} of {k}); "
            f"offending columns: {list(self.columns)}"
        )


class UnderdeterminedError(NumericalError):
    def __init__(self, n: int, k: int) -> None:
        self.n = n
        self.k = k
        super().__init__(f"need n > K to fit, got n={n} K={k}")


class NoAdmissibleModelError(NumericalError):
    def __init__(self, detail: str = "") -> None:
        msg = "no admissible model"
        super().__init__(f"{msg}: {detail}" if detail else msg)


@dataclass(frozen=True, eq=False)
class FunctionalTerm:
    name: str
    basis: BasisSpec
    x_mean: Curve
    columns: slice
    beta: Curve


@dataclass(frozen=True, eq=False)
class FglsFit:
    b: np.ndarray
    cov_b: np.ndarray
    theta_hat: float
    sigma2_hat: float
    y: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    df: float
    gccv: float
    method: Method
    cov_spec: CovarianceSpec
    basis_record: Optional[tuple[str, int]] = None
    beta_hat: Optional[Curve] = None
    terms: tuple[FunctionalTerm, ...] = field(default=())
    y_mean: float = 0.0
    iterations: int = 0
    converged: bool = True
    gls_value: float = float("nan")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def k(self) -> int:
        return int(self.b.shape[0])

    def beta(self, name: Optional[str] = None) -> Curve:
        if not self.terms:
            raise FglsError("fit has no functional terms")
        if name is None:
            return self.terms[0].beta
        for term in self.terms:
            if term.name == name:
                return term.beta
        raise FglsError(f"no functional term named {name!r}")


@dataclass(frozen=True, eq=False)
class Prediction:
    point: np.ndarray
    variance: np.ndarray
    regression_part: np.ndarray
    correction_part: np.ndarray
    horizons: tuple[int, ...]
    variance_clipped: bool = False


def _as_vector(y) -> np.ndarray:
    if isinstance(y, ScalarResponse):
        return y.y
    return np.ravel(np.asarray(y, dtype=np.float64))


def _design_array(Z) -> np.ndarray:
    arr = np.asarray(getattr(Z, "Z", Z), dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, np.newaxis]
    return arr


def _whitener(sigma: Union[np.ndarray, Whitener]) -> Whitener:
    return sigma if isinstance(sigma, Whitener) else whiten(sigma)


def gls_criterion(y, Z, b, sigma: Union[np.ndarray, Whitener]) -> float:
    """r' Sigma^{-1} r with r = y - Z b, evaluated through whitening."""
    yv = _as_vector(y)
    r = yv - _design_array(Z) @ np.ravel(b)
    rt = _whitener(sigma).apply(r)
    return float(np.dot(rt, rt))


def effective_df(S: np.ndarray, sigma: np.ndarray) -> float:
    """tr(2 S Sigma - S Sigma S')."""
    s_sigma = S @ sigma
    return float(2.0 * np.sum(S * sigma.T) - np.sum(s_sigma * S))


def gccv_score(y, yhat, S: np.ndarray, sigma: np.ndarray) -> float:
    yv = _as_vector(y)
    n = yv.shape[0]
    if n == 0:
        raise FglsError("gccv needs at least one observation")
    tr_c = effective_df(np.asarray(S, dtype=np.float64), np.asarray(sigma, dtype=np.float64))
    return _gccv(float(np.sum((yv - _as_vector(yhat)) ** 2)), tr_c, n)


def _gccv(rss: float, tr_c: float, n: int) -> float:
    if tr_c >= n:
        return float("inf")
    return rss / (1.0 - tr_c / n) ** 2


@dataclass(frozen=True, eq=False)
class _WhitenedQR:
    Z: np.ndarray
    Zt: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    piv: np.ndarray
    whitener: Whitener


def _whitened_qr(Z: np.ndarray, wh: Whitener) -> _WhitenedQR:
    n, k = Z.shape
    Zt = wh.apply(Z)
    Q, R, piv = qr(Zt, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    top = float(d[0]) if d.size else 0.0
    tol = top * max(n, k) * np.finfo(np.float64).eps * 100
    rank = int(np.sum(d > tol)) if top > 0 else 0
    if rank < k:
        raise RankDeficiencyError(sorted(piv[rank:].tolist()), rank, k)
    return _WhitenedQR(Z=Z, Zt=Zt, Q=Q, R=R, piv=piv, whitener=wh)


def hat_matrix(Z, whitener: Whitener) -> np.ndarray:
    """H = Z (Z'WZ)^{-1} Z'W with W = Sigma^{-1}."""
    dec = _whitened_qr(_design_array(Z), whitener)
    return dec.Z @ _left_inverse(dec)


def _left_inverse(dec: _WhitenedQR) -> np.ndarray:
    # (Z'WZ)^{-1} Z'W = P R^{-1} Q' L^{-1}
    rows = solve_triangular(dec.R, dec.whitener.apply_transpose(dec.Q).T)
    out = np.empty_like(rows)
    out[dec.piv] = rows
    return out


def fit_gls(y, Z, spec: CovarianceSpec, method: Method = Method.GLS) -> FglsFit:
    yv = _as_vector(y)
    Za = _design_array(Z)
    n, k = Za.shape
    if yv.shape[0] != n:
        raise FglsError(f"response/covariate length mismatch: {yv.shape[0]} responses, {n} design rows")
    if n <= k:
        raise UnderdeterminedError(n, k)
    sigma = build_sigma(spec, n)
    wh = whitener_for(spec, n)
    dec = _whitened_qr(Za, wh)
    left = _left_inverse(dec)
    b = left @ yv
    H = Za @ left
    fitted = H @ yv
    residuals = yv - fitted
    rt = wh.apply(residuals)
    gls_value = float(np.dot(rt, rt))
    df = effective_df(H, sigma)
    gccv = _gccv(float(np.sum(residuals**2)), df, n)
    sigma2 = gls_value / (n - df) if df < n else float("inf")
    rinv = solve_triangular(dec.R, np.eye(k))
    cov_perm = rinv @ rinv.T
    cov_b = np.empty_like(cov_perm)
    cov_b[np.ix_(dec.piv, dec.piv)] = cov_perm
    cov_b = sigma2 * 0.5 * (cov_b + cov_b.T)
    return FglsFit(
        b=b,
        cov_b=cov_b,
        theta_hat=spec.theta,
        sigma2_hat=sigma2,
        y=yv,
        fitted=fitted,
        residuals=residuals,
        df=df,
        gccv=gccv,
        method=Method.parse(method),
        cov_spec=spec,
        gls_value=gls_value,
    )


def _param_change(old: CovarianceSpec, new: CovarianceSpec) -> float:
    if old.family is CovFamily.HETERO_BLOCK:
        return float(np.max(np.abs(np.subtract(old.block_variances, new.block_variances))))
    return abs(new.theta - old.theta)


def _start_spec(spec: CovarianceSpec, theta0: float) -> CovarianceSpec:
    if spec.family in (CovFamily.AR1, CovFamily.EQUICORRELATED):
        return spec.with_theta(theta0)
    if spec.family is CovFamily.HETERO_BLOCK:
        return replace(spec, block_variances=(1.0,) * len(spec.block_sizes))
    if spec.family is CovFamily.SPATIAL and theta0 > 0:
        return spec.with_theta(theta0)
    return spec


def fit_igls(
    y,
    Z,
    spec: CovarianceSpec,
    theta0: float = 0.0,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> FglsFit:
    """Alternate the GLS fit and the residual-based covariance update.

    ``iterations`` counts refits after the initial fit at ``theta0``. If the
    stop rule is not met within ``max_iter`` refits, the iterate with the
    smallest GCCV is returned with ``converged=False``.
    """
    if max_iter < 1:
        raise FglsError(f"max_iter must be >= 1, got {max_iter}")
    current = _start_spec(spec, theta0)
    fit = fit_gls(y, Z, current, method=Method.IGLS)
    if spec.family is CovFamily.IDENTITY:
        return replace(fit, iterations=0, converged=True)
    best = fit
    for it in range(1, max_iter + 1):
        est = estimate_theta(fit.residuals, current)
        new_fit = fit_gls(y, Z, est.spec, method=Method.IGLS)
        scale = 1.0 + float(np.max(np.abs(new_fit.b)))
        change = max(_param_change(current, est.spec), float(np.max(np.abs(new_fit.b - fit.b))) / scale)
        logger.debug("igls iteration %d: theta=%.6f change=%.3g", it, est.theta, change)
        fit, current = new_fit, est.spec
        if fit.gccv < best.gccv:
            best = fit
        if change < tol:
            return replace(fit, iterations=it, converged=True)
    logger.warning("igls did not converge in %d iterations; returning the best-GCCV iterate", max_iter)
    return replace(best, iterations=max_iter, converged=False)


def _profile_objective(y: np.ndarray, Z: np.ndarray, spec: CovarianceSpec, criterion: ThetaCriterion):
    n = y.shape[0]

    def objective(theta: float) -> float:
        s = spec.with_theta(theta)
        if criterion == "gccv":
            try:
                return fit_gls(y, Z, s).gccv
            except NumericalError:
                return float("inf")
        wh = whitener_for(s, n)
        yt = wh.apply(y)
        Zt = wh.apply(Z)
        b = lstsq(Zt, yt)[0]
        r = yt - Zt @ b
        return innovation_scale(s) * float(np.dot(r, r))

    return objective


def profile_theta(
    y,
    Z,
    spec: CovarianceSpec,
    theta_grid: Optional[Sequence[float]] = None,
    criterion: ThetaCriterion = "gls",
) -> float:
    """Pick theta on a grid (ties to the smaller |theta|), then refine by golden section.

    An explicit ``theta_grid`` is searched as given, without refinement.
    """
    yv = _as_vector(y)
    Za = _design_array(Z)
    objective = _profile_objective(yv, Za, spec, criterion)
    refine = theta_grid is None
    if theta_grid is None:
        grid = np.round(np.linspace(-THETA_BOUND, THETA_BOUND, int(round(2 * THETA_BOUND / THETA_STEP)) + 1), 10)
    else:
        grid = np.asarray(list(theta_grid), dtype=np.float64)
        if grid.size == 0:
            raise FglsError("theta grid is empty")
    values = np.array([objective(t) for t in grid])
    best = min(range(grid.shape[0]), key=lambda i: (values[i], abs(grid[i])))
    theta = float(grid[best])
    if refine and 0 < best < grid.shape[0] - 1:
        try:
            res = minimize_scalar(
                objective,
                bracket=(grid[best - 1], grid[best], grid[best + 1]),
                method="golden",
                options={"xtol": 1e-6},
            )
        except ValueError:
            return theta
        if abs(res.x) <= THETA_BOUND and res.fun < values[best]:
            theta = float(res.x)
    return theta


@dataclass(frozen=True, eq=False)
class _Prepared:
    y: np.ndarray
    y_mean: float
    names: tuple[str, ...]
    centered: dict[str, FunctionalSample]
    means: dict[str, Curve]


def _named(samples: Samples) -> dict[str, FunctionalSample]:
    if isinstance(samples, FunctionalSample):
        return {"x": samples}
    named = dict(samples)
    if not named:
        raise FglsError("at least one functional covariate is required")
    return named


def _prepare(y, samples: Samples) -> _Prepared:
    yv = _as_vector(y)
    named = _named(samples)
    centered, means = {}, {}
    for name, sample in named.items():
        ScalarResponse(yv).require_paired(sample)
        centered[name], means[name] = center(sample)
    y_mean = float(yv.mean())
    return _Prepared(y=yv - y_mean, y_mean=y_mean, names=tuple(named), centered=centered, means=means)


def _build_design(
    prep: _Prepared,
    family: BasisFamily,
    K: int,
    order: int,
    fpc_cache: Optional[dict[str, BasisSpec]] = None,
) -> tuple[np.ndarray, list[tuple[str, BasisSpec, slice]]]:
    blocks, layout = [], []
    start = 0
    for name in prep.names:
        sample = prep.centered[name]
        if family is BasisFamily.FPC:
            cached = (fpc_cache or {}).get(name)
            basis = cached.truncate(K) if cached is not None and cached.K >= K else fpc_basis(sample, K)
        else:
            basis = bspline_basis(sample.grid, K, order)
        design = assemble_design(project(sample, basis), basis, basis)
        blocks.append(design.Z)
        layout.append((name, basis, slice(start, start + basis.K)))
        start += basis.K
    return np.hstack(blocks), layout


def _attach_terms(fit: FglsFit, prep: _Prepared, layout, family: BasisFamily, K: int) -> FglsFit:
    terms = tuple(
        FunctionalTerm(name=name, basis=basis, x_mean=prep.means[name], columns=cols, beta=beta_curve(fit.b[cols], basis))
        for name, basis, cols in layout
    )
    return replace(fit, terms=terms, beta_hat=terms[0].beta, y_mean=prep.y_mean, basis_record=(family.value, K))


def _fit_candidate(
    y: np.ndarray,
    Z: np.ndarray,
    method: Method,
    spec: CovarianceSpec,
    theta_grid: Optional[Sequence[float]],
    theta_criterion: ThetaCriterion,
    max_iter: int,
    tol: float,
) -> FglsFit:
    if method is Method.LM:
        return fit_gls(y, Z, CovarianceSpec(), method=Method.LM)
    if method is Method.IGLS:
        return fit_igls(y, Z, spec, theta0=0.0, max_iter=max_iter, tol=tol)
    if spec.family is CovFamily.IDENTITY:
        return fit_gls(y, Z, spec)
    if spec.family is CovFamily.AR1:
        theta = profile_theta(y, Z, spec, theta_grid, theta_criterion)
        return fit_gls(y, Z, spec.with_theta(theta))
    if theta_grid is not None:
        fits = [fit_gls(y, Z, spec.with_theta(t)) for t in theta_grid]
        return min(fits, key=lambda f: (f.gccv, abs(f.theta_hat)))
    # two-step feasible GLS for families without a profile objective
    ols = fit_gls(y, Z, CovarianceSpec())
    est = estimate_theta(ols.residuals, _start_spec(spec, 0.0))
    return fit_gls(y, Z, est.spec)


def select_model(
    y,
    samples: Samples,
    family: Union[BasisFamily, str] = BasisFamily.FPC,
    k_values: Optional[Sequence[int]] = None,
    cov_spec: Optional[CovarianceSpec] = None,
    method: Union[Method, str] = Method.GLS,
    theta_grid: Optional[Sequence[float]] = None,
    theta_criterion: ThetaCriterion = "gls",
    order: int = 4,
    max_iter: int = 100,
    tol: float = 1e-6,
    search: KSearch = "exhaustive",
) -> FglsFit:
    """Fit the basis dimensions in ``k_values`` in increasing order and keep the smallest GCCV.

    Response and curves are centered first. For AR1 GLS the correlation is
    profiled per candidate (``theta_criterion`` picks the profile objective).
    LM ignores ``cov_spec`` and fits with identity covariance.

    ``search="forward"`` stops at the first candidate whose GCCV does not
    improve on the best so far, so the result is the first local minimum
    along K. Candidates with n - 1 or more design columns would interpolate
    the centered response and are skipped with a warning.
    """
    family = BasisFamily.parse(family)
    method = Method.parse(method)
    spec = cov_spec if cov_spec is not None else CovarianceSpec(family=CovFamily.AR1)
    if theta_criterion not in ("gls", "gccv"):
        raise FglsError(f"theta_criterion must be 'gls' or 'gccv', got {theta_criterion!r}")
    if search not in ("exhaustive", "forward"):
        raise FglsError(f"search must be 'exhaustive' or 'forward', got {search!r}")
    ks = sorted(set(int(k) for k in (k_values if k_values is not None else DEFAULT_K_RANGE[family])))
    if not ks:
        raise FglsError("K range is empty")
    prep = _prepare(y, samples)
    n = prep.y.shape[0]
    # centering uses one degree of freedom, so n - 1 columns already interpolate
    feasible = [k for k in ks if k * len(prep.names) < n - 1]
    if len(feasible) < len(ks):
        logger.warning(
            "K in %s skipped: %d covariate(s) with n=%d leave no residual degrees of freedom",
            [k for k in ks if k not in feasible], len(prep.names), n,
        )
    if not feasible:
        raise NoAdmissibleModelError(f"{family.value} K in {ks} all need at least n - 1 = {n - 1} columns")
    ks = feasible

    fpc_cache: dict[str, BasisSpec] = {}
    if family is BasisFamily.FPC:
        for name in prep.names:
            rank = attainable_rank(prep.centered[name])
            top = min(max(ks), rank)
            if top < max(ks):
                logger.warning("covariate %s: K above the attainable rank %d is skipped", name, rank)
            if top >= 1:
                fpc_cache[name] = fpc_basis(prep.centered[name], top)
        limit = min((b.K for b in fpc_cache.values()), default=0) if len(fpc_cache) == len(prep.names) else 0
        ks = [k for k in ks if k <= limit]

    best: Optional[FglsFit] = None
    for K in ks:
        try:
            Z, layout = _build_design(prep, family, K, order, fpc_cache)
            fit = _fit_candidate(prep.y, Z, method, spec, theta_grid, theta_criterion, max_iter, tol)
        except (BasisError, NumericalError) as e:
            logger.warning("candidate K=%d rejected: %s", K, e)
            continue
        logger.debug("candidate K=%d theta=%.4f gccv=%.6g", K, fit.theta_hat, fit.gccv)
        if not np.isfinite(fit.gccv):
            continue
        if best is None or fit.gccv < best.gccv:
            best = _attach_terms(fit, prep, layout, family, K)
        elif search == "forward":
            break
    if best is None:
        raise NoAdmissibleModelError(f"{family.value} K in {list(ks) or 'none'}")
    return best


def fit_functional(
    y,
    samples: Samples,
    family: Union[BasisFamily, str],
    K: int,
    spec: Optional[CovarianceSpec] = None,
    method: Union[Method, str] = Method.GLS,
    order: int = 4,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> FglsFit:
    """Single-candidate fit at fixed K (and fixed theta unless method is IGLS)."""
    family = BasisFamily.parse(family)
    method = Method.parse(method)
    spec = spec if spec is not None else CovarianceSpec()
    prep = _prepare(y, samples)
    Z, layout = _build_design(prep, family, K, order)
    if method is Method.LM:
        fit = fit_gls(prep.y, Z, CovarianceSpec(), method=Method.LM)
    elif method is Method.IGLS:
        theta0 = spec.theta if spec.family in (CovFamily.AR1, CovFamily.EQUICORRELATED) else 0.0
        fit = fit_igls(prep.y, Z, spec, theta0=theta0, max_iter=max_iter, tol=tol)
    else:
        fit = fit_gls(prep.y, Z, spec)
    return _attach_terms(fit, prep, layout, family, K)


def _named_new(fit: FglsFit, new_curves: Samples) -> dict[str, FunctionalSample]:
    if isinstance(new_curves, FunctionalSample):
        if len(fit.terms) != 1:
            raise FglsError(f"fit has {len(fit.terms)} functional covariates; pass a mapping of new curves")
        return {fit.terms[0].name: new_curves}
    named = dict(new_curves)
    missing = [t.name for t in fit.terms if t.name not in named]
    if missing:
        raise FglsError(f"new curves missing for covariate(s): {', '.join(missing)}")
    return named


def predict(
    fit: FglsFit,
    new_curves: Samples,
    horizons: Sequence[int],
    spec: Optional[CovarianceSpec] = None,
    new_locations: Optional[np.ndarray] = None,
) -> Prediction:
    """Forecast the responses of ``new_curves`` at the given horizons.

    Row j of the new curves is the covariate at horizon ``horizons[j]``. The
    regression part includes the restored response mean; the correction part
    is Delta Sigma^{-1} r from the training residuals. The variance is the
    plug-in sigma2_hat (Sigma_0 - Delta Sigma^{-1} Delta') and ignores the
    estimation error of theta and beta.
    """
    if not fit.terms:
        raise FglsError("fit has no functional terms to predict with")
    hs = tuple(int(h) for h in horizons)
    named = _named_new(fit, new_curves)
    q = len(hs)
    regression = np.full(q, fit.y_mean)
    for term in fit.terms:
        sample = named[term.name]
        term.basis.grid.require_same(sample.grid)
        if sample.n != q:
            raise FglsError(f"{sample.n} new curves for {q} horizons (covariate {term.name})")
        weighted = sample.grid.weights * term.beta.values
        regression += (sample.values - term.x_mean.values) @ weighted
    spec = spec if spec is not None else fit.cov_spec
    n = fit.n
    delta, sigma0 = cross_cov(spec, n, hs, new_locations)
    if np.any(delta):
        wh = whitener_for(spec, n)
        correction = delta @ wh.solve(fit.residuals)
        var = sigma0 - delta @ wh.solve(delta.T)
    else:
        correction = np.zeros(q)
        var = np.array(sigma0, dtype=np.float64)
    var = fit.sigma2_hat * 0.5 * (var + var.T)
    lam, vec = eigh(var)
    clipped = bool(lam.min() < -1e-10)
    if clipped:
        logger.warning("negative prediction variance %.3g clipped to 0", lam.min())
    if np.any(lam < 0):
        var = (vec * np.clip(lam, 0.0, None)) @ vec.T
    return Prediction(
        point=regression + correction,
        variance=var,
        regression_part=regression,
        correction_part=correction,
        horizons=hs,
        variance_clipped=clipped,
    )


def beta_table(fit: FglsFit) -> pd.DataFrame:
    if not fit.terms:
        raise FglsError("fit has no functional terms")
    grid = fit.terms[0].basis.grid
    data = {"t": grid.points}
    for term in fit.terms:
        data[f"beta_{term.name}" if len(fit.terms) > 1 else "beta"] = term.beta.values
    return pd.DataFrame(data)


def fit_summary(fit: FglsFit) -> FitSummary:
    family, K = fit.basis_record if fit.basis_record is not None else ("design", fit.k)
    return FitSummary(
        method=fit.method.value,
        basis=family,
        K=K,
        covariance=fit.cov_spec.label,
        theta_hat=fit.theta_hat,
        sigma2_hat=fit.sigma2_hat,
        df=fit.df,
        gccv=fit.gccv,
        n=fit.n,
        iterations=fit.iterations,
        converged=fit.converged,
        covariates=[t.name for t in fit.terms],
    )
