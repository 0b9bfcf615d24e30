from .csv_io import (
    DataFormatError,
    align_response,
    read_curves,
    read_long_curves,
    read_panel,
    read_response,
    read_wide_curves,
)
from .reports import (
    write_fit_report,
    write_manifest,
    write_rolling_report,
    write_sim_report,
    write_table,
)

__all__ = [
    "DataFormatError",
    "align_response",
    "read_curves",
    "read_long_curves",
    "read_panel",
    "read_response",
    "read_wide_curves",
    "write_fit_report",
    "write_manifest",
    "write_rolling_report",
    "write_sim_report",
    "write_table",
]
