from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from ..core.basis import BasisFamily
from ..core.covmodels import CovarianceSpec, CovFamily
from ..core.errors import FglsError
from ..core.fgls import FglsFit, Method, predict, select_model
from ..core.funcdata import Curve, FunctionalSample, Grid, simulate_wiener
from ..utils.config import SimConfig
from ..utils.models import ReplicaRecord, SimCell, SimReport


logger = logging.getLogger(__name__)


class Scenario(str, Enum):
    A = "A"
    B = "B"


def make_beta(scenario: "Scenario | str", grid: Grid) -> Curve:
    if grid.a < 0 or grid.b > 1:
        raise FglsError(f"benchmark coefficient functions live on [0, 1], grid spans [{grid.a}, {grid.b}]")
    t = grid.points
    if Scenario(scenario) is Scenario.A:
        values = 2 * np.sin(0.5 * np.pi * t) + 4 * np.sin(1.5 * np.pi * t) + 5 * np.sin(2.5 * np.pi * t)
    else:
        values = np.log(15 * t**2 + 10) + np.cos(4 * np.pi * t)
    return Curve(grid=grid, values=values)


def ar1_errors(size: int, phi: float, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) path with marginal variance ``variance``."""
    z = rng.standard_normal(size)
    u = z * np.sqrt(variance * (1.0 - phi * phi))
    u[0] = z[0] * np.sqrt(variance)
    return lfilter([1.0], [1.0, -phi], u)


@dataclass(frozen=True, eq=False)
class Replica:
    index: int
    sample: FunctionalSample
    y: np.ndarray
    signal: np.ndarray
    errors: np.ndarray
    future_curves: FunctionalSample
    future_y: np.ndarray
    horizons: tuple[int, ...]


def _replica_seeds(seed: int, index: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence([int(seed), int(index)]).spawn(3)


def generate_replica(cfg: SimConfig, index: int) -> Replica:
    """Draw replica ``index``; the result depends only on (cfg, seed, index).

    Errors follow a stationary AR(1) with variance snr * var(signal), scaled
    by 1 - phi^2 under the "damped" calibration. They are continued past n so
    that horizon h is observed at position n + h, with a fresh Wiener curve as
    its covariate.
    """
    if cfg.seed is None:
        raise FglsError("simulation needs an explicit seed")
    grid = Grid.uniform(0.0, 1.0, cfg.m)
    beta = make_beta(cfg.scenario, grid)
    curve_seed, error_seed, future_seed = _replica_seeds(cfg.seed, index)
    sample = simulate_wiener(cfg.n, grid, curve_seed)
    signal = sample.inner_products(beta)
    variance = cfg.snr * float(np.var(signal, ddof=1))
    if cfg.noise_calibration == "damped":
        variance *= 1.0 - cfg.phi * cfg.phi
    horizons = tuple(int(h) for h in cfg.horizons)
    errors = ar1_errors(cfg.n + max(horizons), cfg.phi, variance, np.random.default_rng(error_seed))
    future = simulate_wiener(len(horizons), grid, future_seed)
    future_y = future.inner_products(beta) + errors[[cfg.n + h - 1 for h in horizons]]
    return Replica(
        index=index,
        sample=sample,
        y=signal + errors[: cfg.n],
        signal=signal,
        errors=errors[: cfg.n],
        future_curves=future,
        future_y=future_y,
        horizons=horizons,
    )


def _select(cfg: SimConfig, rep: Replica, method: Method, k_values: Optional[Sequence[int]]) -> FglsFit:
    return select_model(
        rep.y,
        rep.sample,
        family=BasisFamily.parse(cfg.basis),
        k_values=k_values,
        cov_spec=CovarianceSpec(family=CovFamily.AR1),
        method=method,
        theta_criterion=cfg.theta_criterion,
        search=cfg.k_search,
    )


def _evaluate(cfg: SimConfig, rep: Replica, beta: Curve, fit: FglsFit) -> ReplicaRecord:
    pred = predict(fit, rep.future_curves, rep.horizons)
    diff = beta.values - fit.beta().values
    beta_error = float(np.sum(beta.grid.weights * diff * diff))
    lm = fit.method is Method.LM
    phi_error = None if lm else (cfg.phi - fit.theta_hat) ** 2
    errors = {h: float((rep.future_y[j] - pred.point[j]) ** 2) for j, h in enumerate(rep.horizons)}
    return ReplicaRecord(
        replica=rep.index,
        method=fit.method.value,
        K=fit.basis_record[1],
        theta_hat=None if lm else fit.theta_hat,
        beta_error=beta_error,
        phi_error=phi_error,
        prediction_error=errors,
    )


def run_replica(cfg: SimConfig, index: int) -> list[ReplicaRecord]:
    """Fit every configured method on replica ``index``.

    With ``k_selection="shared"`` the basis dimension is chosen once, by the
    GCCV of the plain functional linear model, and every method is fitted at
    that K.
    """
    methods = [Method.parse(m) for m in cfg.methods]
    try:
        rep = generate_replica(cfg, index)
    except Exception as e:
        logger.exception("replica %d: generation failed", index)
        return [ReplicaRecord(replica=index, method=m.value, failed=True, error=str(e)) for m in methods]
    beta = make_beta(cfg.scenario, rep.sample.grid)
    k_values = cfg.k_values
    lm_fit: Optional[FglsFit] = None
    if cfg.k_selection == "shared":
        try:
            lm_fit = _select(cfg, rep, Method.LM, k_values)
        except Exception as e:
            logger.exception("replica %d: basis selection failed", index)
            return [ReplicaRecord(replica=index, method=m.value, failed=True, error=str(e)) for m in methods]
        k_values = (lm_fit.basis_record[1],)
    records = []
    for method in methods:
        try:
            fit = lm_fit if method is Method.LM and lm_fit is not None else _select(cfg, rep, method, k_values)
            records.append(_evaluate(cfg, rep, beta, fit))
        except Exception as e:
            logger.exception("replica %d: %s fit failed", index, method.value)
            records.append(ReplicaRecord(replica=index, method=method.value, failed=True, error=str(e)))
    return records


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def summarize(cfg: SimConfig, records: Sequence[ReplicaRecord]) -> list[SimCell]:
    cells = []
    for name in cfg.methods:
        mine = [r for r in records if r.method == name]
        ok = [r for r in mine if not r.failed]
        cells.append(
            SimCell(
                scenario=cfg.scenario,
                snr=cfg.snr,
                phi=cfg.phi,
                basis=cfg.basis,
                method=name,
                replicas=len(ok),
                failures=len(mine) - len(ok),
                mean_k=_mean(r.K for r in ok),
                beta_mse=_mean(r.beta_error for r in ok),
                phi_mse=_mean(r.phi_error for r in ok),
                mspe={h: _mean(r.prediction_error.get(h) for r in ok) for h in cfg.horizons},
            )
        )
    return cells


def run_simulation(cfg: SimConfig, progress: Optional[Callable[[int], None]] = None) -> SimReport:
    if cfg.seed is None:
        raise FglsError("simulation needs an explicit seed")
    logger.info(
        "simulation scenario=%s snr=%s phi=%s basis=%s n=%d replicas=%d workers=%d",
        cfg.scenario, cfg.snr, cfg.phi, cfg.basis, cfg.n, cfg.replicas, cfg.max_workers,
    )

    def one(index: int) -> list[ReplicaRecord]:
        out = run_replica(cfg, index)
        if progress is not None:
            progress(index)
        return out

    with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
        # map keeps replica order regardless of completion order
        per_replica = list(pool.map(one, range(cfg.replicas)))
    records = [r for batch in per_replica for r in batch]
    failures = sum(1 for r in records if r.failed)
    if failures:
        logger.warning("%d of %d replica fits failed", failures, len(records))
    return SimReport(config=cfg.to_dict(), cells=summarize(cfg, records), records=records, failures=failures)


def study_configs(
    base: SimConfig,
    snrs: Sequence[float] = (0.05, 0.10, 0.20),
    phis: Sequence[float] = (0.0, 0.3, 0.6, 0.9),
    bases: Optional[Sequence[str]] = None,
) -> list[SimConfig]:
    return [
        replace(base, snr=float(s), phi=float(p), basis=b)
        for b in (bases or (base.basis,))
        for s in snrs
        for p in phis
    ]


def run_study(cfgs: Sequence[SimConfig]) -> list[SimReport]:
    """Run each cell in turn; every cell reuses the same seed stream."""
    reports = []
    for i, cfg in enumerate(cfgs, start=1):
        logger.info("study cell %d/%d", i, len(cfgs))
        reports.append(run_simulation(cfg))
    return reports
