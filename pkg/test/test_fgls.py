from __future__ import annotations

import numpy as np
import pytest

from support import ar1_path, run_tests, wiener_regression

from fglsreg.core.basis import assemble_design, fpc_basis, project
from fglsreg.core.covmodels import CovarianceSpec, CovFamily, build_sigma, estimate_theta, whitener_for
from fglsreg.core.errors import FglsError, GridMismatchError, NumericalError
from fglsreg.core.fgls import (
    Method,
    NoAdmissibleModelError,
    RankDeficiencyError,
    UnderdeterminedError,
    beta_table,
    fit_functional,
    fit_gls,
    fit_igls,
    fit_summary,
    gccv_score,
    gls_criterion,
    hat_matrix,
    predict,
    profile_theta,
    select_model,
)
from fglsreg.core.funcdata import FunctionalSample, Grid, center


def _dense_specs(n: int) -> list[CovarianceSpec]:
    rng = np.random.default_rng(21)
    return [
        CovarianceSpec(),
        CovarianceSpec(family=CovFamily.EQUICORRELATED, theta=0.3),
        CovarianceSpec(family=CovFamily.HETERO_BLOCK, block_sizes=(n // 2, n - n // 2), block_variances=(1.0, 3.0)),
        CovarianceSpec(family=CovFamily.AR1, theta=0.6),
        CovarianceSpec(family=CovFamily.SPATIAL, theta=0.4, locations=rng.uniform(size=(n, 2))),
    ]


def test_gls_criterion_values() -> None:
    Z = np.ones((3, 1))
    assert gls_criterion(np.zeros(3), Z, [0.0], np.eye(3)) == 0.0
    y = np.array([1.0, 0.0, -1.0])
    assert gls_criterion(y, Z, [0.0], np.eye(3)) == pytest.approx(2.0)
    sigma = build_sigma(CovarianceSpec(family="ar1", theta=0.5), 3)
    expected = y @ np.linalg.solve(sigma, y)
    assert gls_criterion(y, Z, [0.0], sigma) == pytest.approx(expected, rel=1e-12)
    fast = whitener_for(CovarianceSpec(family="ar1", theta=0.5), 3)
    assert gls_criterion(y, Z, [0.0], fast) == pytest.approx(expected, rel=1e-12)


def test_identity_fit_is_ols_with_gcv() -> None:
    rng = np.random.default_rng(2)
    Z = rng.standard_normal((40, 4))
    y = Z @ np.array([1.0, 0.0, -1.0, 2.0]) + rng.standard_normal(40)
    fit = fit_gls(y, Z, CovarianceSpec())
    b_ols = np.linalg.lstsq(Z, y, rcond=None)[0]
    np.testing.assert_allclose(fit.b, b_ols, atol=1e-10)
    rss = float(np.sum((y - Z @ b_ols) ** 2))
    assert fit.df == pytest.approx(4.0, abs=1e-10)
    assert fit.gccv == pytest.approx(rss / (1 - 4 / 40) ** 2, rel=1e-10)
    assert fit.sigma2_hat == pytest.approx(rss / 36, rel=1e-10)


def test_gls_matches_dense_inverse() -> None:
    rng = np.random.default_rng(5)
    n = 8
    Z = rng.standard_normal((n, 3))
    y = rng.standard_normal(n)
    for spec in _dense_specs(n):
        sigma = build_sigma(spec, n)
        si = np.linalg.inv(sigma)
        A = Z.T @ si @ Z
        b = np.linalg.solve(A, Z.T @ si @ y)
        H = Z @ np.linalg.solve(A, Z.T @ si)
        r = y - Z @ b
        tr_c = 2 * np.trace(H @ sigma) - np.trace(H @ sigma @ H.T)
        s2 = (r @ si @ r) / (n - tr_c)
        fit = fit_gls(y, Z, spec)
        np.testing.assert_allclose(fit.b, b, atol=1e-10, err_msg=spec.label)
        np.testing.assert_allclose(fit.fitted, Z @ b, atol=1e-10)
        assert fit.df == pytest.approx(tr_c, abs=1e-9)
        assert fit.gccv == pytest.approx(np.sum(r**2) / (1 - tr_c / n) ** 2, rel=1e-9)
        assert fit.sigma2_hat == pytest.approx(s2, rel=1e-9)
        np.testing.assert_allclose(fit.cov_b, s2 * np.linalg.inv(A), rtol=1e-8, atol=1e-10)


def test_exact_design_is_interpolated() -> None:
    rng = np.random.default_rng(6)
    Z = rng.standard_normal((30, 3))
    b_true = np.array([0.5, -1.0, 2.0])
    fit = fit_gls(Z @ b_true, Z, CovarianceSpec(family="ar1", theta=0.7))
    np.testing.assert_allclose(fit.b, b_true, atol=1e-8)
    assert np.max(np.abs(fit.residuals)) < 1e-8


def test_gccv_score_oracles() -> None:
    rng = np.random.default_rng(8)
    n = 5
    y = rng.standard_normal(n)
    Z = rng.standard_normal((n, 2))
    P = Z @ np.linalg.solve(Z.T @ Z, Z.T)
    rss = float(np.sum((y - P @ y) ** 2))
    assert gccv_score(y, P @ y, P, np.eye(n)) == pytest.approx(rss / (1 - 2 / n) ** 2, rel=1e-12)
    assert gccv_score(y, y, P, np.eye(n)) == 0.0
    assert gccv_score(y, y, np.eye(n), np.eye(n)) == float("inf")
    S = rng.standard_normal((n, n)) * 0.2
    sigma = build_sigma(CovarianceSpec(family="ar1", theta=0.3), n)
    yhat = S @ y
    tr_c = 2 * np.trace(S @ sigma) - np.trace(S @ sigma @ S.T)
    expected = np.sum((y - yhat) ** 2) / (1 - tr_c / n) ** 2
    assert gccv_score(y, yhat, S, sigma) == pytest.approx(expected, rel=1e-12)


def test_hat_matrix_is_weighted_projection() -> None:
    rng = np.random.default_rng(10)
    spec = CovarianceSpec(family="ar1", theta=0.8)
    Z = rng.standard_normal((30, 4))
    H = hat_matrix(Z, whitener_for(spec, 30))
    W = np.linalg.inv(build_sigma(spec, 30))
    np.testing.assert_allclose(H @ H, H, atol=1e-9)
    np.testing.assert_allclose(W @ H, H.T @ W, atol=1e-8)
    np.testing.assert_allclose(H @ Z, Z, atol=1e-9)


def test_rank_deficiency_names_column() -> None:
    rng = np.random.default_rng(3)
    x = rng.standard_normal(20)
    Z = np.column_stack([x, x, rng.standard_normal(20)])
    with pytest.raises(RankDeficiencyError) as info:
        fit_gls(rng.standard_normal(20), Z, CovarianceSpec(family="ar1", theta=0.5))
    assert len(info.value.columns) == 1 and info.value.columns[0] in (0, 1)
    assert info.value.rank == 2


def test_fit_needs_more_rows_than_columns() -> None:
    with pytest.raises(UnderdeterminedError) as info:
        fit_gls(np.zeros(3), np.eye(3), CovarianceSpec())
    assert isinstance(info.value, NumericalError)
    assert (info.value.n, info.value.k) == (3, 3)


def test_candidates_with_too_many_columns_are_skipped() -> None:
    sample, y, _ = wiener_regression(n=8, seed=13)
    fit = select_model(y, sample, "bspline", method="lm")
    assert 4 <= fit.basis_record[1] <= 6
    temp, y10, _ = wiener_regression(n=10, seed=14)
    hum = wiener_regression(n=10, seed=15)[0]
    fit = select_model(y10, {"temp": temp, "hum": hum}, "fpc", method="lm")
    assert fit.basis_record[1] <= 4 and fit.k == 2 * fit.basis_record[1]
    with pytest.raises(NoAdmissibleModelError):
        select_model(y[:5], sample.subset(slice(0, 5)), "bspline", k_values=[5, 6], method="lm")


def test_gls_coefficients_vary_less_than_ols() -> None:
    n = 100
    rng = np.random.default_rng(41)
    Z = rng.standard_normal((n, 3))
    b = np.array([1.0, -0.5, 0.25])
    spec = CovarianceSpec(family="ar1", theta=0.9)
    gls, ols = [], []
    for r in range(500):
        y = Z @ b + ar1_path(n, 0.9, 7000 + r)
        gls.append(fit_gls(y, Z, spec).b)
        ols.append(fit_gls(y, Z, CovarianceSpec(), method=Method.LM).b)
    assert np.all(np.var(gls, axis=0) <= 1.05 * np.var(ols, axis=0))


def test_igls_reaches_fixed_point() -> None:
    rng = np.random.default_rng(12)
    n = 120
    Z = rng.standard_normal((n, 3))
    y = Z @ np.array([1.0, -2.0, 0.5]) + ar1_path(n, 0.7, 13)
    fit = fit_igls(y, Z, CovarianceSpec(family="ar1"))
    assert fit.converged and 1 <= fit.iterations < 100
    assert fit.method is Method.IGLS
    score = Z.T @ whitener_for(fit.cov_spec, n).solve(fit.residuals)
    assert np.max(np.abs(score)) < 1e-8 * (1 + np.max(np.abs(Z.T @ y)))
    again = estimate_theta(fit.residuals, fit.cov_spec)
    assert abs(again.theta - fit.theta_hat) < 1e-4
    assert 0.4 < fit.theta_hat < 0.9


def test_igls_iteration_budget() -> None:
    rng = np.random.default_rng(14)
    Z = rng.standard_normal((50, 2))
    y = Z @ np.array([1.0, 1.0]) + ar1_path(50, 0.9, 15)
    fit = fit_igls(y, Z, CovarianceSpec(family="ar1"), max_iter=1)
    assert fit.iterations == 1
    with pytest.raises(FglsError):
        fit_igls(y, Z, CovarianceSpec(family="ar1"), max_iter=0)


def test_profile_theta_recovers_correlation() -> None:
    rng = np.random.default_rng(16)
    n = 400
    Z = rng.standard_normal((n, 2))
    y = Z @ np.array([2.0, -1.0]) + ar1_path(n, 0.8, 17)
    theta = profile_theta(y, Z, CovarianceSpec(family="ar1"))
    assert abs(theta - 0.8) < 0.1
    assert profile_theta(y, Z, CovarianceSpec(family="ar1"), theta_grid=[0.0]) == 0.0


def test_single_candidate_matches_direct_fit() -> None:
    sample, y, _ = wiener_regression(n=50, seed=4)
    fit = select_model(y, sample, "fpc", k_values=[3], cov_spec=CovarianceSpec(family="ar1"), theta_grid=[0.0])
    centered, _ = center(sample)
    basis = fpc_basis(centered, 3)
    Z = assemble_design(project(centered, basis), basis, basis).Z
    direct = fit_gls(y - y.mean(), Z, CovarianceSpec(family="ar1", theta=0.0))
    np.testing.assert_allclose(fit.b, direct.b, atol=1e-10)
    assert fit.gccv == pytest.approx(direct.gccv, rel=1e-10)
    assert fit.basis_record == ("fpc", 3)


def test_selection_recovers_beta() -> None:
    sample, y, beta = wiener_regression(n=150, seed=1, noise=0.05)
    fit = select_model(y, sample, "fpc", method="lm")
    grid = sample.grid
    err = np.sum(grid.weights * (fit.beta().values - beta) ** 2)
    assert err < 0.5
    table = beta_table(fit)
    assert list(table.columns) == ["t", "beta"] and len(table) == grid.m
    summary = fit_summary(fit)
    assert summary.method == "lm" and summary.basis == "fpc" and summary.K == fit.basis_record[1]


def test_forward_search_stops_at_first_local_minimum() -> None:
    sample, y, _ = wiener_regression(n=100, seed=17, noise=0.3)
    full = select_model(y, sample, "fpc", method="lm")
    forward = select_model(y, sample, "fpc", method="lm", search="forward")
    kf = forward.basis_record[1]
    assert kf <= full.basis_record[1] and forward.gccv >= full.gccv
    scores = [select_model(y, sample, "fpc", k_values=[k], method="lm").gccv for k in range(1, min(kf + 1, 8) + 1)]
    assert all(a > b for a, b in zip(scores[: kf - 1], scores[1:kf]))
    assert forward.gccv == pytest.approx(scores[kf - 1], rel=1e-10)
    if kf < 8:
        assert scores[kf] >= scores[kf - 1]
    with pytest.raises(FglsError):
        select_model(y, sample, "fpc", method="lm", search="backward")


def test_pure_noise_gccv_close_to_null() -> None:
    sample = wiener_regression(n=100, seed=2)[0]
    y = np.random.default_rng(99).standard_normal(100)
    fit = select_model(y, sample, "fpc", method="lm")
    n = y.shape[0]
    intercept_only = float(np.sum((y - y.mean()) ** 2)) / (1.0 - 1.0 / n) ** 2
    assert abs(fit.gccv / intercept_only - 1.0) < 0.05


def test_rank_limited_candidates_are_skipped() -> None:
    grid = Grid.uniform(0.0, 1.0, 31)
    rng = np.random.default_rng(7)
    a, b = rng.standard_normal(30), rng.standard_normal(30)
    values = np.outer(a, np.sin(2 * np.pi * grid.points)) + np.outer(b, np.cos(2 * np.pi * grid.points))
    sample = FunctionalSample(grid=grid, values=values)
    fit = select_model(a + 0.01 * rng.standard_normal(30), sample, "fpc", k_values=range(1, 6), method="lm")
    assert fit.basis_record[1] <= 2


def test_no_admissible_model() -> None:
    grid = Grid.uniform(0.0, 1.0, 11)
    sample = FunctionalSample(grid=grid, values=np.tile(np.arange(11.0), (10, 1)))
    with pytest.raises(NoAdmissibleModelError):
        select_model(np.arange(10.0), sample, "fpc")
    with pytest.raises(NoAdmissibleModelError):
        select_model(np.arange(10.0), sample, "bspline", k_values=[4, 5])


def test_prediction_without_correlation() -> None:
    sample, y, _ = wiener_regression(n=60, seed=3)
    fit = fit_functional(y, sample, "fpc", 3, method="lm")
    new = sample.subset([0, 1])
    pred = predict(fit, new, horizons=[1, 2])
    expected = fit.y_mean + (new.values - fit.terms[0].x_mean.values) @ (sample.grid.weights * fit.beta().values)
    np.testing.assert_allclose(pred.regression_part, expected, atol=1e-12)
    np.testing.assert_array_equal(pred.correction_part, np.zeros(2))
    np.testing.assert_allclose(pred.variance, fit.sigma2_hat * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(pred.point, pred.regression_part)


def test_prediction_correction_for_strong_ar1() -> None:
    sample, y, _ = wiener_regression(n=60, seed=5)
    spec = CovarianceSpec(family="ar1", theta=0.99)
    fit = fit_functional(y, sample, "fpc", 3, spec=spec)
    zero = FunctionalSample(grid=sample.grid, values=np.zeros((1, sample.grid.m)))
    pred = predict(fit, zero, horizons=[1])
    np.testing.assert_allclose(pred.correction_part, [0.99 * fit.residuals[-1]], rtol=1e-8, atol=1e-10)
    assert pred.variance[0, 0] >= 0
    assert pred.variance[0, 0] == pytest.approx(fit.sigma2_hat * (1 - 0.99**2), rel=1e-6)


def test_prediction_input_checks() -> None:
    sample, y, _ = wiener_regression(n=40, seed=6)
    fit = fit_functional(y, sample, "bspline", 5, spec=CovarianceSpec(family="ar1", theta=0.5))
    other = FunctionalSample(grid=Grid.uniform(0.0, 1.0, 11), values=np.zeros((1, 11)))
    with pytest.raises(GridMismatchError):
        predict(fit, other, horizons=[1])
    with pytest.raises(FglsError):
        predict(fit, sample.subset([0]), horizons=[0])
    with pytest.raises(FglsError):
        predict(fit, sample.subset([0, 1]), horizons=[1])


def test_two_covariates() -> None:
    sample, y, _ = wiener_regression(n=80, seed=9)
    other = wiener_regression(n=80, seed=10)[0]
    fit = select_model(y, {"temp": sample, "hum": other}, "fpc", k_values=[2, 3], method="lm")
    assert [t.name for t in fit.terms] == ["temp", "hum"]
    assert fit.k == 2 * fit.basis_record[1]
    pred = predict(fit, {"temp": sample.subset([0]), "hum": other.subset([0])}, horizons=[1])
    assert pred.point.shape == (1,)
    with pytest.raises(FglsError):
        predict(fit, sample.subset([0]), horizons=[1])


def main() -> None:
    run_tests(
        [
            test_gls_criterion_values,
            test_identity_fit_is_ols_with_gcv,
            test_gls_matches_dense_inverse,
            test_exact_design_is_interpolated,
            test_gccv_score_oracles,
            test_hat_matrix_is_weighted_projection,
            test_rank_deficiency_names_column,
            test_fit_needs_more_rows_than_columns,
            test_candidates_with_too_many_columns_are_skipped,
            test_gls_coefficients_vary_less_than_ols,
            test_igls_reaches_fixed_point,
            test_igls_iteration_budget,
            test_profile_theta_recovers_correlation,
            test_single_candidate_matches_direct_fit,
            test_selection_recovers_beta,
            test_forward_search_stops_at_first_local_minimum,
            test_pure_noise_gccv_close_to_null,
            test_rank_limited_candidates_are_skipped,
            test_no_admissible_model,
            test_prediction_without_correlation,
            test_prediction_correction_for_strong_ar1,
            test_prediction_input_checks,
            test_two_covariates,
        ]
    )


if __name__ == "__main__":
    main()
