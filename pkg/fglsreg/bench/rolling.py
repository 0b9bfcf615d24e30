from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ..core.basis import BasisFamily
from ..core.covmodels import CovarianceSpec, CovFamily
from ..core.errors import FglsError, NumericalError
from ..core.fgls import FglsFit, Method, predict, select_model
from ..core.funcdata import Curve, FunctionalSample, Grid
from ..utils.config import RollingConfig, SyntheticPanelConfig
from ..utils.models import RollingError, RollingReport, RollingRow
from .simulation import ar1_errors


logger = logging.getLogger(__name__)

THRESHOLD_SUFFIX = ".thres"


def threshold_transform(curves: FunctionalSample, thres: float = 10.0) -> FunctionalSample:
    """Pointwise min(x(t) - thres, 0)."""
    return curves.map_values(lambda v: np.minimum(v - thres, 0.0))


@dataclass(frozen=True, eq=False)
class Panel:
    """Weekly response series per group with one functional covariate per week.

    ``rates`` is groups x weeks; each covariate is groups x weeks x M.
    """

    grid: Grid
    groups: tuple[str, ...]
    weeks: np.ndarray
    rates: np.ndarray
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        rates = np.asarray(self.rates, dtype=np.float64)
        g, t = len(self.groups), np.asarray(self.weeks).shape[0]
        if rates.shape != (g, t):
            raise FglsError(f"rates have shape {rates.shape}, expected ({g}, {t})")
        if not np.all(np.isfinite(rates)):
            raise FglsError("rates contain non-finite values")
        for name, values in self.covariates.items():
            arr = np.asarray(values)
            if arr.shape != (g, t, self.grid.m):
                raise FglsError(f"covariate {name} has shape {arr.shape}, expected ({g}, {t}, {self.grid.m})")
            if not np.all(np.isfinite(arr)):
                raise FglsError(f"covariate {name} contains non-finite values")

    @property
    def n_weeks(self) -> int:
        return int(self.rates.shape[1])

    def curves(self, name: str, group: int, rows: np.ndarray, threshold: float = 10.0) -> FunctionalSample:
        base = name[: -len(THRESHOLD_SUFFIX)] if name.endswith(THRESHOLD_SUFFIX) else name
        if base not in self.covariates:
            raise FglsError(f"unknown covariate {base!r}; panel has {', '.join(self.covariates) or 'none'}")
        sample = FunctionalSample(grid=self.grid, values=np.asarray(self.covariates[base])[group, rows])
        return threshold_transform(sample, threshold) if base != name else sample


@dataclass(frozen=True, eq=False)
class ContributionSummary:
    v: np.ndarray
    labels: np.ndarray
    group_means: tuple[Curve, ...]


def contribution_quartiles(fit_or_beta: Union[FglsFit, Curve], sample: FunctionalSample) -> ContributionSummary:
    """Split curves into quartile groups of v_i = <X_i, beta> and average each group.

    Ties are broken by position in a stable sort, so equal projections fill
    the groups in sample order.
    """
    beta = fit_or_beta.beta() if isinstance(fit_or_beta, FglsFit) else fit_or_beta
    if sample.n < 4:
        raise FglsError(f"quartile groups need at least 4 curves, got {sample.n}")
    v = sample.inner_products(beta)
    order = np.argsort(v, kind="stable")
    pos = np.empty(sample.n, dtype=np.int64)
    pos[order] = np.arange(sample.n)
    labels = np.minimum(3, 4 * pos // sample.n)
    means = tuple(Curve(grid=sample.grid, values=sample.values[labels == q].mean(axis=0)) for q in range(4))
    return ContributionSummary(v=v, labels=labels, group_means=means)


def synthetic_panel(cfg: SyntheticPanelConfig, seed: int) -> Panel:
    """Flu-like panel: seasonal temperature curves drive next week's rate.

    Each weekly curve is a seasonal level plus four random components
    (level, trend, one sine and one cosine), so the centered curves have rank
    at most four. The rate at week t+1 is 2 + <X_t, beta> + AR(1) noise with
    variance ``noise`` times the signal variance.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    grid = Grid.uniform(0.0, 1.0, cfg.m)
    s = grid.points
    shapes = np.vstack([np.ones_like(s), s - 0.5, np.sin(2 * np.pi * s), np.cos(2 * np.pi * s)])
    beta = -0.4 - 0.6 * s
    weeks = np.arange(cfg.weeks)
    season = 12.0 + 8.0 * np.cos(2 * np.pi * weeks / 52.0)
    temp = np.empty((cfg.groups, cfg.weeks, cfg.m))
    hum = np.empty_like(temp)
    rates = np.empty((cfg.groups, cfg.weeks))
    for g in range(cfg.groups):
        offset = rng.normal(0.0, 1.5)
        scores = rng.normal(0.0, 1.0, size=(cfg.weeks, 4)) * np.array([2.0, 3.0, 1.5, 1.0])
        temp[g] = (season + offset)[:, np.newaxis] + scores @ shapes
        hum_scores = rng.normal(0.0, 1.0, size=(cfg.weeks, 4)) * np.array([5.0, 2.0, 1.0, 1.0])
        hum[g] = 70.0 + hum_scores @ shapes
        signal = temp[g] @ (grid.weights * beta)
        variance = cfg.noise * float(np.var(signal, ddof=1))
        noise = ar1_errors(cfg.weeks, cfg.phi, variance, rng) if variance > 0 else np.zeros(cfg.weeks)
        rates[g, 0] = 2.0 + signal[0] + noise[0]
        rates[g, 1:] = 2.0 + signal[:-1] + noise[1:]
    return Panel(
        grid=grid,
        groups=tuple(f"g{g + 1}" for g in range(cfg.groups)),
        weeks=weeks,
        rates=rates,
        covariates={"temp": temp, "hum": hum},
    )


def _origins(panel: Panel, cfg: RollingConfig) -> list[int]:
    last = panel.n_weeks - 1 - max(cfg.horizons)
    first = last - cfg.n_origins + 1
    if first < 0:
        raise FglsError(
            f"panel has {panel.n_weeks} weeks, too short for {cfg.n_origins} origins at horizon {max(cfg.horizons)}"
        )
    return list(range(first, last + 1))


def _fit_pair(
    y: np.ndarray,
    samples: dict[str, FunctionalSample],
    cfg: RollingConfig,
    method: Method,
) -> FglsFit:
    return select_model(
        y,
        samples,
        family=BasisFamily.parse(cfg.basis),
        k_values=cfg.k_values,
        cov_spec=CovarianceSpec(family=CovFamily.parse(cfg.cov_family)),
        method=method,
    )


def rolling_forecast(panel: Panel, cfg: RollingConfig) -> RollingReport:
    """Rolling-origin MSPE of FLM and FGLS per covariate set and horizon.

    At origin o the training pairs are (X_t, y_{t+h}) for the n_train most
    recent t with t + h <= o; the forecast of y_{o+h} uses X_o. The MSPE
    averages squared errors over groups, then over evaluated origins.
    """
    group_idx = list(range(len(panel.groups)))
    if cfg.groups is not None:
        missing = [g for g in cfg.groups if g not in panel.groups]
        if missing:
            raise FglsError(f"unknown group(s): {', '.join(missing)}")
        group_idx = [panel.groups.index(g) for g in cfg.groups]
    origins = _origins(panel, cfg)
    models = (("FLM", Method.LM), ("FGLS", Method.GLS))

    rows: list[RollingRow] = []
    errors: list[RollingError] = []
    gaps: set[int] = set()
    for cov_set in cfg.covariate_sets:
        names = [c.strip() for c in cov_set.split("+") if c.strip()]
        per_origin: dict[tuple[str, int], list[float]] = {}
        thetas: list[float] = []
        skipped = 0
        for o in origins:
            if o - max(cfg.horizons) - cfg.n_train + 1 < 0:
                logger.warning("origin %d skipped: fewer than %d training weeks", o, cfg.n_train)
                gaps.add(o)
                skipped += 1
                continue
            batch: list[RollingError] = []
            try:
                for g in group_idx:
                    for h in cfg.horizons:
                        rows_t = np.arange(o - h - cfg.n_train + 1, o - h + 1)
                        train = {c: panel.curves(c, g, rows_t, cfg.threshold) for c in names}
                        new = {c: panel.curves(c, g, np.array([o]), cfg.threshold) for c in names}
                        y = panel.rates[g, rows_t + h]
                        truth = float(panel.rates[g, o + h])
                        for label, method in models:
                            fit = _fit_pair(y, train, cfg, method)
                            point = float(predict(fit, new, [h]).point[0])
                            theta = None if method is Method.LM else fit.theta_hat
                            batch.append(
                                RollingError(
                                    covariates=cov_set,
                                    origin=o,
                                    group=panel.groups[g],
                                    horizon=h,
                                    model=label,
                                    squared_error=(truth - point) ** 2,
                                    theta_hat=theta,
                                )
                            )
            except NumericalError as e:
                logger.warning("origin %d skipped for %s: %s", o, cov_set, e)
                gaps.add(o)
                skipped += 1
                continue
            errors.extend(batch)
            for err in batch:
                per_origin.setdefault((f"{err.model}_h{err.horizon}", o), []).append(err.squared_error)
                if err.theta_hat is not None:
                    thetas.append(err.theta_hat)
        used = len(origins) - skipped
        if used == 0:
            raise FglsError(f"no origin could be evaluated for covariates {cov_set!r}")
        mspe = {}
        for label, _ in models:
            for h in cfg.horizons:
                key = f"{label}_h{h}"
                by_origin = [np.mean(v) for (k, _o), v in per_origin.items() if k == key]
                mspe[key] = float(np.mean(by_origin))
        logger.info("rolling %s: %s", cov_set, ", ".join(f"{k}={v:.4g}" for k, v in mspe.items()))
        rows.append(
            RollingRow(
                covariates=cov_set,
                mspe=mspe,
                mean_theta=float(np.mean(thetas)) if thetas else None,
                origins_used=used,
                origins_skipped=skipped,
            )
        )
    return RollingReport(rows=rows, errors=errors, gaps=sorted(gaps))
