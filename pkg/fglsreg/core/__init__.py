from .basis import (
    BasisError,
    BasisFamily,
    BasisSpec,
    DesignMatrix,
    assemble_design,
    beta_curve,
    bspline_basis,
    fpc_basis,
    project,
)
from .covmodels import (
    CovarianceSpec,
    CovFamily,
    NotPositiveDefiniteError,
    ThetaEstimate,
    Whitener,
    build_sigma,
    cross_cov,
    estimate_theta,
    parse_cov_spec,
    whiten,
    whitener_for,
)
from .dcor import DcorResult, DistanceMatrix, distance_correlation, distance_matrix, double_center, screening_table
from .errors import FglsError, GridMismatchError, NumericalError
from .fgls import (
    FglsFit,
    Method,
    NoAdmissibleModelError,
    Prediction,
    RankDeficiencyError,
    UnderdeterminedError,
    beta_table,
    fit_functional,
    fit_gls,
    fit_igls,
    fit_summary,
    gccv_score,
    gls_criterion,
    predict,
    select_model,
)
from .funcdata import Curve, FunctionalSample, Grid, ScalarResponse, center, inner_product, norm, simulate_wiener

__all__ = [
    "BasisError",
    "BasisFamily",
    "BasisSpec",
    "DesignMatrix",
    "assemble_design",
    "beta_curve",
    "bspline_basis",
    "fpc_basis",
    "project",
    "CovarianceSpec",
    "CovFamily",
    "NotPositiveDefiniteError",
    "ThetaEstimate",
    "Whitener",
    "build_sigma",
    "cross_cov",
    "estimate_theta",
    "parse_cov_spec",
    "whiten",
    "whitener_for",
    "DcorResult",
    "DistanceMatrix",
    "distance_correlation",
    "distance_matrix",
    "double_center",
    "screening_table",
    "FglsError",
    "GridMismatchError",
    "NumericalError",
    "FglsFit",
    "Method",
    "NoAdmissibleModelError",
    "Prediction",
    "RankDeficiencyError",
    "UnderdeterminedError",
    "beta_table",
    "fit_functional",
    "fit_gls",
    "fit_igls",
    "fit_summary",
    "gccv_score",
    "gls_criterion",
    "predict",
    "select_model",
    "Curve",
    "FunctionalSample",
    "Grid",
    "ScalarResponse",
    "center",
    "inner_product",
    "norm",
    "simulate_wiener",
]
