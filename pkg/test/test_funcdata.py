from __future__ import annotations

import numpy as np
import pytest

from support import run_tests

from fglsreg.core.errors import FglsError, GridMismatchError
from fglsreg.core.funcdata import (
    Curve,
    FunctionalSample,
    Grid,
    ScalarResponse,
    center,
    inner_product,
    norm,
    simulate_wiener,
)


def test_uniform_grid_weights() -> None:
    grid = Grid.uniform(0.0, 1.0, 11)
    assert grid.m == 11
    assert grid.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert grid.weights[0] == pytest.approx(0.05)
    assert grid.weights[5] == pytest.approx(0.1)


def test_grid_rejects_unordered_points() -> None:
    with pytest.raises(FglsError):
        Grid.from_points([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(FglsError):
        Grid.from_points([0.0])


def test_inner_product_exact_for_linear() -> None:
    grid = Grid.uniform(0.0, 1.0, 21)
    one = Curve.constant(grid, 1.0)
    t = Curve.from_function(grid, lambda s: s)
    assert inner_product(one, one) == pytest.approx(1.0, abs=1e-12)
    assert inner_product(t, one) == pytest.approx(0.5, abs=1e-12)
    assert norm(Curve.constant(grid, 2.0)) == pytest.approx(2.0, abs=1e-12)


def test_inner_product_symmetric_and_bilinear() -> None:
    rng = np.random.default_rng(4)
    for m in (5, 21, 64):
        grid = Grid.from_points(np.sort(rng.uniform(-2.0, 3.0, m)))
        for _ in range(20):
            f, g, h = (Curve(grid=grid, values=rng.standard_normal(m)) for _ in range(3))
            a, b = rng.standard_normal(2)
            combo = Curve(grid=grid, values=a * f.values + b * g.values)
            assert inner_product(f, g) == pytest.approx(inner_product(g, f), abs=1e-10)
            assert inner_product(combo, h) == pytest.approx(
                a * inner_product(f, h) + b * inner_product(g, h), abs=1e-10
            )


def test_grid_mismatch_is_reported() -> None:
    f = Curve.constant(Grid.uniform(0.0, 1.0, 11), 1.0)
    g = Curve.constant(Grid.uniform(0.0, 1.0, 12), 1.0)
    with pytest.raises(GridMismatchError) as info:
        inner_product(f, g)
    assert "incompatible grids" in str(info.value)


def test_non_finite_value_is_located() -> None:
    grid = Grid.uniform(0.0, 1.0, 5)
    values = np.zeros((3, 5))
    values[2, 1] = np.nan
    with pytest.raises(FglsError) as info:
        FunctionalSample(grid=grid, values=values)
    assert "curve 2 at grid point 1" in str(info.value)


def test_center_removes_mean() -> None:
    sample = simulate_wiener(25, Grid.uniform(0.0, 1.0, 31), 3)
    centered, mean = center(sample)
    np.testing.assert_allclose(centered.values.mean(axis=0), 0.0, atol=1e-14)
    np.testing.assert_allclose(mean.values, sample.values.mean(axis=0))


def test_wiener_is_reproducible_and_scaled() -> None:
    grid = Grid.uniform(0.0, 1.0, 51)
    a = simulate_wiener(2000, grid, 11)
    b = simulate_wiener(2000, grid, 11)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, simulate_wiener(2000, grid, 12).values)
    assert np.all(a.values[:, 0] == 0.0)
    assert a.values[:, -1].var() == pytest.approx(1.0, abs=0.15)
    inc = np.diff(a.values, axis=1)
    r = np.corrcoef(inc[:, 10], inc[:, 30])[0, 1]
    assert abs(r) < 0.1


def test_response_pairing() -> None:
    sample = simulate_wiener(4, Grid.uniform(0.0, 1.0, 5), 0)
    ScalarResponse(np.arange(4.0)).require_paired(sample)
    with pytest.raises(FglsError) as info:
        ScalarResponse(np.arange(3.0)).require_paired(sample)
    assert "response/covariate length mismatch" in str(info.value)


def test_subset_and_stack_keep_ids() -> None:
    grid = Grid.uniform(0.0, 1.0, 5)
    sample = FunctionalSample(grid=grid, values=np.arange(15.0).reshape(3, 5), ids=("a", "b", "c"))
    sub = sample.subset([2, 0])
    assert sub.ids == ("c", "a")
    np.testing.assert_array_equal(sub.values[0], sample.values[2])
    assert FunctionalSample.stack([sample, sub]).n == 5


def main() -> None:
    run_tests(
        [
            test_uniform_grid_weights,
            test_grid_rejects_unordered_points,
            test_inner_product_exact_for_linear,
            test_inner_product_symmetric_and_bilinear,
            test_grid_mismatch_is_reported,
            test_non_finite_value_is_located,
            test_center_removes_mean,
            test_wiener_is_reproducible_and_scaled,
            test_response_pairing,
            test_subset_and_stack_keep_ids,
        ]
    )


if __name__ == "__main__":
    main()
