from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


MethodName = Literal["lm", "gls", "igls"]
BasisName = Literal["fpc", "bspline", "design"]


class FitSummary(BaseModel):
    method: MethodName
    basis: BasisName
    K: int = Field(..., ge=1)
    covariance: str
    theta_hat: float
    sigma2_hat: float
    df: float
    gccv: float
    n: int
    iterations: int = 0
    converged: bool = True
    covariates: List[str] = Field(default_factory=list)


class PredictionRecord(BaseModel):
    row: int
    horizon: int
    point: float
    variance: float
    regression_part: float
    correction_part: float
    variance_clipped: bool = False


class ReplicaRecord(BaseModel):
    replica: int
    method: MethodName
    K: Optional[int] = None
    theta_hat: Optional[float] = None
    beta_error: Optional[float] = None
    phi_error: Optional[float] = None
    prediction_error: Dict[int, float] = Field(default_factory=dict)
    failed: bool = False
    error: Optional[str] = None


class SimCell(BaseModel):
    scenario: Literal["A", "B"]
    snr: float
    phi: float
    basis: Literal["fpc", "bspline"]
    method: MethodName
    replicas: int
    failures: int = 0
    mean_k: Optional[float] = None
    beta_mse: Optional[float] = None
    phi_mse: Optional[float] = None
    mspe: Dict[int, Optional[float]] = Field(default_factory=dict)


class SimReport(BaseModel):
    config: Dict[str, Any]
    cells: List[SimCell]
    records: List[ReplicaRecord] = Field(default_factory=list)
    failures: int = 0


class RollingError(BaseModel):
    covariates: str
    origin: int
    group: str
    horizon: int
    model: Literal["FLM", "FGLS"]
    squared_error: float
    theta_hat: Optional[float] = None


class RollingRow(BaseModel):
    covariates: str
    mspe: Dict[str, float]
    mean_theta: Optional[float] = None
    origins_used: int
    origins_skipped: int = 0


class RollingReport(BaseModel):
    rows: List[RollingRow]
    errors: List[RollingError] = Field(default_factory=list)
    gaps: List[int] = Field(default_factory=list)


class RunManifest(BaseModel):
    subcommand: str
    config: Dict[str, Any]
    seed: Optional[int] = None
    versions: Dict[str, str]
    outputs: List[str] = Field(default_factory=list)
