from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml


SECTIONS = ("fit", "simulate", "roll", "logging")


class ConfigError(ValueError):
    pass


def load_yaml(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    with path.open("r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_keyvalue(path: Path) -> Dict[str, str]:
    """Flat ``key=value`` file; ``#`` starts a comment, blank lines are skipped."""
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    out: Dict[str, str] = {}
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, value = (part.strip() for part in text.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            out[key] = value
    return out


def load_config(path: Optional[Path], section: str) -> Dict[str, Any]:
    """Raw config dict; a flat key=value file fills ``section`` only."""
    if path is None:
        return {}
    if path.suffix.lower() in (".yaml", ".yml"):
        return load_yaml(path)
    return {section: load_keyvalue(path)}


def merge_overrides(raw: Dict[str, Any], section: str, overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(raw)
    sec = dict(merged.get(section) or {})
    sec.update({k: v for k, v in overrides.items() if v is not None})
    merged[section] = sec
    return merged


def _resolve_str(section: Dict[str, Any], key: str, default: str) -> str:
    value = section.get(key)
    if value is not None and str(value).strip() != "":
        return str(value).strip()
    env_key = section.get(f"{key}_env")
    if env_key:
        env_value = os.getenv(str(env_key))
        if env_value is not None and env_value.strip() != "":
            return env_value.strip()
    return default


def _check_keys(name: str, section: Dict[str, Any], allowed: Iterable[str]) -> None:
    allowed = set(allowed)
    allowed |= {f"{k}_env" for k in allowed}
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown config key(s) in [{name}]: {', '.join(unknown)}")


def _num(section: Dict[str, Any], key: str, default, kind):
    value = section.get(key, default)
    if value is None:
        return None
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {value!r}") from None
    if kind is int:
        if not number.is_integer():
            raise ConfigError(f"invalid value for {key}: {value!r} (expected an integer)")
        return int(number)
    return number


def _bool(section: Dict[str, Any], key: str, default: bool) -> bool:
    value = section.get(key, default)
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"invalid value for {key}: {value!r}")


def _list(section: Dict[str, Any], key: str, default: Optional[tuple], kind=str) -> Optional[tuple]:
    value = section.get(key)
    if value is None:
        return default
    items = value.replace(";", ",").split(",") if isinstance(value, str) else list(value)
    try:
        return tuple(kind(str(v).strip()) if kind is str else kind(float(v)) for v in items if str(v).strip())
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {value!r}") from None


def _k_values(section: Dict[str, Any]) -> Optional[tuple[int, ...]]:
    listed = _list(section, "k_values", None, int)
    if listed is not None:
        return listed
    lo = _num(section, "k_min", None, int)
    hi = _num(section, "k_max", None, int)
    if lo is None and hi is None:
        return None
    if lo is None or hi is None or lo > hi or lo < 1:
        raise ConfigError(f"invalid K range: k_min={lo} k_max={hi}")
    return tuple(range(lo, hi + 1))


def _choice(value: str, key: str, allowed: Iterable[str]) -> str:
    allowed = tuple(allowed)
    if value not in allowed:
        raise ConfigError(f"invalid value for {key}: {value!r} (expected one of {', '.join(allowed)})")
    return value


BASES = ("fpc", "bspline")
METHODS = ("lm", "gls", "igls")
COV_FAMILIES = ("identity", "equicorrelated", "hetero_block", "ar1", "spatial")
THETA_FAMILIES = ("equicorrelated", "ar1", "spatial")
THETA_CRITERIA = ("gls", "gccv")
K_SEARCHES = ("exhaustive", "forward")
K_SELECTIONS = ("shared", "per_method")
NOISE_CALIBRATIONS = ("marginal", "damped")


@dataclass(frozen=True)
class LoggingConfig:
    level: str = "INFO"
    silence_third_party: bool = True


@dataclass(frozen=True)
class FitConfig:
    basis: str = "fpc"
    k_values: Optional[tuple[int, ...]] = None
    order: int = 4
    method: str = "gls"
    cov_family: str = "ar1"
    theta: Optional[float] = None
    theta_criterion: str = "gls"
    theta_grid: Optional[tuple[float, ...]] = None
    k_search: str = "exhaustive"
    block_sizes: Optional[tuple[int, ...]] = None
    max_iter: int = 100
    tol: float = 1e-6
    horizons: tuple[int, ...] = (1,)


@dataclass(frozen=True)
class SimConfig:
    scenario: str = "A"
    snr: float = 0.05
    phi: float = 0.9
    n: int = 100
    replicas: int = 200
    horizons: tuple[int, ...] = (1, 5, 10)
    basis: str = "fpc"
    methods: tuple[str, ...] = ("lm", "gls", "igls")
    seed: Optional[int] = None
    m: int = 101
    k_values: Optional[tuple[int, ...]] = None
    theta_criterion: str = "gls"
    k_search: str = "forward"
    k_selection: str = "shared"
    noise: Optional[str] = None
    max_workers: int = 1

    def __post_init__(self) -> None:
        if self.scenario not in ("A", "B"):
            raise ConfigError(f"scenario must be A or B, got {self.scenario!r}")
        if not self.snr > 0:
            raise ConfigError(f"snr must be > 0, got {self.snr}")
        if not abs(self.phi) < 1:
            raise ConfigError(f"phi out of (-1,1): {self.phi}")
        if not self.n > 20:
            raise ConfigError(f"n must be > 20, got {self.n}")
        if self.replicas < 1:
            raise ConfigError(f"replicas must be >= 1, got {self.replicas}")
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise ConfigError(f"horizons must be >= 1, got {list(self.horizons)}")
        _choice(self.basis, "basis", BASES)
        if not self.methods:
            raise ConfigError("methods must not be empty")
        for m in self.methods:
            _choice(m, "methods", METHODS)
        _choice(self.theta_criterion, "theta_criterion", THETA_CRITERIA)
        _choice(self.k_search, "k_search", K_SEARCHES)
        _choice(self.k_selection, "k_selection", K_SELECTIONS)
        if self.noise is not None:
            _choice(self.noise, "noise", NOISE_CALIBRATIONS)
        if self.m < 4:
            raise ConfigError(f"m must be >= 4, got {self.m}")
        if self.max_workers < 1:
            raise ConfigError(f"max_workers must be >= 1, got {self.max_workers}")

    @property
    def noise_calibration(self) -> str:
        """Var(eps) = snr * Var(signal), times (1 - phi^2) when "damped" (scenario B default)."""
        if self.noise is not None:
            return self.noise
        return "damped" if self.scenario == "B" else "marginal"

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        for key in ("horizons", "methods", "k_values"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out


@dataclass(frozen=True)
class SyntheticPanelConfig:
    groups: int = 3
    weeks: int = 160
    phi: float = 0.9
    noise: float = 0.2
    m: int = 14


@dataclass(frozen=True)
class RollingConfig:
    n_train: int = 104
    horizons: tuple[int, ...] = (1, 2)
    n_origins: int = 40
    covariate_sets: tuple[str, ...] = ("temp",)
    groups: Optional[tuple[str, ...]] = None
    basis: str = "fpc"
    k_values: Optional[tuple[int, ...]] = None
    cov_family: str = "ar1"
    threshold: float = 10.0
    seed: Optional[int] = None
    synthetic: SyntheticPanelConfig = field(default_factory=SyntheticPanelConfig)

    def __post_init__(self) -> None:
        if self.n_train < 5:
            raise ConfigError(f"n_train must be >= 5, got {self.n_train}")
        if self.n_origins < 1:
            raise ConfigError(f"n_origins must be >= 1, got {self.n_origins}")
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise ConfigError(f"horizons must be >= 1, got {list(self.horizons)}")
        if not self.covariate_sets:
            raise ConfigError("covariate_sets must not be empty")
        _choice(self.basis, "basis", BASES)
        _choice(self.cov_family, "cov_family", ("ar1", "identity"))
        if not abs(self.synthetic.phi) < 1:
            raise ConfigError(f"phi out of (-1,1): {self.synthetic.phi}")

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        for key in ("horizons", "covariate_sets", "groups", "k_values"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out


@dataclass(frozen=True)
class AppConfig:
    fit: FitConfig
    simulate: SimConfig
    roll: RollingConfig
    logging: LoggingConfig
    raw: Dict[str, Any]


def parse_fit(section: Dict[str, Any]) -> FitConfig:
    _check_keys(
        "fit",
        section,
        ("basis", "k_values", "k_min", "k_max", "order", "method", "cov_family", "theta",
         "theta_criterion", "theta_grid", "k_search", "block_sizes", "max_iter", "tol", "horizons"),
    )
    cfg = FitConfig(
        basis=_choice(_resolve_str(section, "basis", "fpc").lower(), "basis", BASES),
        k_values=_k_values(section),
        order=_num(section, "order", 4, int),
        method=_choice(_resolve_str(section, "method", "gls").lower(), "method", METHODS),
        cov_family=_choice(_resolve_str(section, "cov_family", "ar1").lower(), "cov_family", COV_FAMILIES),
        theta=_num(section, "theta", None, float),
        theta_criterion=_choice(_resolve_str(section, "theta_criterion", "gls"), "theta_criterion", THETA_CRITERIA),
        theta_grid=_list(section, "theta_grid", None, float),
        k_search=_choice(_resolve_str(section, "k_search", "exhaustive").lower(), "k_search", K_SEARCHES),
        block_sizes=_list(section, "block_sizes", None, int),
        max_iter=_num(section, "max_iter", 100, int),
        tol=_num(section, "tol", 1e-6, float),
        horizons=_list(section, "horizons", (1,), int),
    )
    if cfg.order < 2:
        raise ConfigError(f"order must be >= 2, got {cfg.order}")
    if cfg.max_iter < 1 or not cfg.tol > 0:
        raise ConfigError("max_iter must be >= 1 and tol > 0")
    if any(h < 1 for h in cfg.horizons):
        raise ConfigError(f"horizons must be >= 1, got {list(cfg.horizons)}")
    fixed = [name for name in ("theta", "theta_grid") if getattr(cfg, name) is not None]
    if fixed:
        if cfg.method != "gls" or cfg.cov_family not in THETA_FAMILIES:
            raise ConfigError(
                f"{' and '.join(fixed)} only apply to method=gls with cov_family in {list(THETA_FAMILIES)},"
                f" got method={cfg.method} cov_family={cfg.cov_family}"
            )
        if len(fixed) == 2:
            raise ConfigError("give theta or theta_grid, not both")
        values = cfg.theta_grid if cfg.theta_grid is not None else (cfg.theta,)
        if cfg.cov_family == "spatial":
            bad = not values or any(not t > 0 for t in values)
        else:
            bad = not values or any(not abs(t) < 1 for t in values)
        if bad:
            raise ConfigError(f"{fixed[0]} out of range for cov_family={cfg.cov_family}: {list(values)}")
    return cfg


def parse_simulate(section: Dict[str, Any]) -> SimConfig:
    _check_keys(
        "simulate",
        section,
        ("scenario", "snr", "phi", "n", "replicas", "B", "horizons", "basis", "methods", "seed", "m",
         "k_values", "k_min", "k_max", "theta_criterion", "k_search", "k_selection", "noise", "max_workers"),
    )
    replicas = section.get("replicas", section.get("B", 200))
    return SimConfig(
        scenario=_resolve_str(section, "scenario", "A").upper(),
        snr=_num(section, "snr", 0.05, float),
        phi=_num(section, "phi", 0.9, float),
        n=_num(section, "n", 100, int),
        replicas=_num({"replicas": replicas}, "replicas", 200, int),
        horizons=_list(section, "horizons", (1, 5, 10), int),
        basis=_resolve_str(section, "basis", "fpc").lower(),
        methods=tuple(m.lower() for m in _list(section, "methods", ("lm", "gls", "igls"))),
        seed=_num(section, "seed", None, int),
        m=_num(section, "m", 101, int),
        k_values=_k_values(section),
        theta_criterion=_resolve_str(section, "theta_criterion", "gls"),
        k_search=_resolve_str(section, "k_search", "forward").lower(),
        k_selection=_resolve_str(section, "k_selection", "shared").lower(),
        noise=_resolve_str(section, "noise", "").lower() or None,
        max_workers=_num(section, "max_workers", 1, int),
    )


def parse_roll(section: Dict[str, Any]) -> RollingConfig:
    synthetic_keys = ("synthetic_groups", "synthetic_weeks", "synthetic_phi", "synthetic_noise", "synthetic_m")
    _check_keys(
        "roll",
        section,
        ("n_train", "horizons", "n_origins", "covariate_sets", "groups", "basis", "k_values", "k_min", "k_max",
         "cov_family", "threshold", "seed") + synthetic_keys,
    )
    synthetic = SyntheticPanelConfig(
        groups=_num(section, "synthetic_groups", 3, int),
        weeks=_num(section, "synthetic_weeks", 160, int),
        phi=_num(section, "synthetic_phi", 0.9, float),
        noise=_num(section, "synthetic_noise", 0.2, float),
        m=_num(section, "synthetic_m", 14, int),
    )
    return RollingConfig(
        n_train=_num(section, "n_train", 104, int),
        horizons=_list(section, "horizons", (1, 2), int),
        n_origins=_num(section, "n_origins", 40, int),
        covariate_sets=_list(section, "covariate_sets", ("temp",)),
        groups=_list(section, "groups", None),
        basis=_resolve_str(section, "basis", "fpc").lower(),
        k_values=_k_values(section),
        cov_family=_resolve_str(section, "cov_family", "ar1").lower(),
        threshold=_num(section, "threshold", 10.0, float),
        seed=_num(section, "seed", None, int),
        synthetic=synthetic,
    )


def parse_logging(section: Dict[str, Any]) -> LoggingConfig:
    _check_keys("logging", section, ("level", "silence_third_party"))
    return LoggingConfig(
        level=_resolve_str(section, "level", "INFO").upper(),
        silence_third_party=_bool(section, "silence_third_party", True),
    )


def parse_config(raw: Dict[str, Any]) -> AppConfig:
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    return AppConfig(
        fit=parse_fit(raw.get("fit") or {}),
        simulate=parse_simulate(raw.get("simulate") or {}),
        roll=parse_roll(raw.get("roll") or {}),
        logging=parse_logging(raw.get("logging") or {}),
        raw=raw,
    )
