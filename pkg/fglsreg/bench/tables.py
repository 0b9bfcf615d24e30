from __future__ import annotations

from typing import Iterable

import pandas as pd

from ..utils.models import SimCell


METHOD_LABELS = {"lm": "LM", "gls": "GLS", "igls": "iGLS"}
BASIS_LABELS = {"fpc": "PC", "bspline": "BSP"}


def cells_frame(cells: Iterable[SimCell]) -> pd.DataFrame:
    """One row per (scenario, basis, method, snr, phi) cell."""
    rows = []
    for c in cells:
        row = {
            "scenario": c.scenario,
            "basis": BASIS_LABELS[c.basis],
            "method": METHOD_LABELS[c.method],
            "snr": c.snr,
            "phi": c.phi,
            "replicas": c.replicas,
            "failures": c.failures,
            "mean_k": c.mean_k,
            "beta_mse": c.beta_mse,
            "phi_mse": c.phi_mse,
        }
        for h, v in sorted(c.mspe.items()):
            row[f"mspe_h{h}"] = v
        rows.append(row)
    frame = pd.DataFrame(rows)
    if not frame.empty:
        frame["method"] = pd.Categorical(frame["method"], categories=list(METHOD_LABELS.values()), ordered=True)
    return frame


def _pivot(frame: pd.DataFrame, value: str) -> pd.DataFrame:
    if frame.empty or frame[value].isna().all():
        return pd.DataFrame()
    table = frame.pivot_table(index=["basis", "method", "snr"], columns="phi", values=value, observed=True)
    table.columns = [f"phi={p:g}" for p in table.columns]
    return table


def selected_k_table(cells: Iterable[SimCell]) -> pd.DataFrame:
    return _pivot(cells_frame(cells), "mean_k")


def beta_error_table(cells: Iterable[SimCell]) -> pd.DataFrame:
    return _pivot(cells_frame(cells), "beta_mse")


def phi_error_table(cells: Iterable[SimCell]) -> pd.DataFrame:
    frame = cells_frame(cells)
    return _pivot(frame[frame["method"] != "LM"], "phi_mse")


def mspe_table(cells: Iterable[SimCell]) -> pd.DataFrame:
    """Rows (basis, method, snr); columns phi x horizon."""
    frame = cells_frame(cells)
    value_cols = [c for c in frame.columns if c.startswith("mspe_h")]
    if not value_cols or frame[value_cols].isna().all().all():
        return pd.DataFrame()
    long = frame.melt(
        id_vars=["basis", "method", "snr", "phi"], value_vars=value_cols, var_name="h", value_name="mspe"
    )
    long["h"] = long["h"].str.removeprefix("mspe_h").astype(int)
    table = long.pivot_table(index=["basis", "method", "snr"], columns=["phi", "h"], values="mspe", observed=True)
    table.columns = [f"phi={p:g} h={h}" for p, h in table.columns]
    return table


def study_tables(cells: Iterable[SimCell]) -> dict[str, pd.DataFrame]:
    cells = list(cells)
    return {
        "table1_selected_k": selected_k_table(cells),
        "table2_beta_mse": beta_error_table(cells),
        "table3_phi_mse": phi_error_table(cells),
        "table4_mspe": mspe_table(cells),
    }
