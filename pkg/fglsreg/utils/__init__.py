from .config import (
    AppConfig,
    ConfigError,
    FitConfig,
    LoggingConfig,
    RollingConfig,
    SimConfig,
    SyntheticPanelConfig,
    load_config,
    load_keyvalue,
    load_yaml,
    merge_overrides,
    parse_config,
)
from .logging_utils import setup_logging
from .models import (
    FitSummary,
    PredictionRecord,
    ReplicaRecord,
    RollingError,
    RollingReport,
    RollingRow,
    RunManifest,
    SimCell,
    SimReport,
)

__all__ = [
    "AppConfig",
    "ConfigError",
    "FitConfig",
    "LoggingConfig",
    "RollingConfig",
    "SimConfig",
    "SyntheticPanelConfig",
    "load_config",
    "load_keyvalue",
    "load_yaml",
    "merge_overrides",
    "parse_config",
    "setup_logging",
    "FitSummary",
    "PredictionRecord",
    "ReplicaRecord",
    "RollingError",
    "RollingReport",
    "RollingRow",
    "RunManifest",
    "SimCell",
    "SimReport",
]
