from .rolling import ContributionSummary, Panel, contribution_quartiles, rolling_forecast, synthetic_panel, threshold_transform
from .simulation import Replica, Scenario, generate_replica, make_beta, run_simulation, run_study, study_configs
from .tables import study_tables

__all__ = [
    "ContributionSummary",
    "Panel",
    "contribution_quartiles",
    "rolling_forecast",
    "synthetic_panel",
    "threshold_transform",
    "Replica",
    "Scenario",
    "generate_replica",
    "make_beta",
    "run_simulation",
    "run_study",
    "study_configs",
    "study_tables",
]
