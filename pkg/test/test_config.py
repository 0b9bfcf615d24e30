from __future__ import annotations

from pathlib import Path

import pytest

from support import run_tests

from fglsreg.utils.config import (
    ConfigError,
    SimConfig,
    load_config,
    load_keyvalue,
    merge_overrides,
    parse_config,
)


def test_defaults() -> None:
    cfg = parse_config({})
    assert cfg.fit.basis == "fpc" and cfg.fit.method == "gls" and cfg.fit.cov_family == "ar1"
    assert cfg.fit.k_values is None
    assert cfg.simulate.horizons == (1, 5, 10) and cfg.simulate.seed is None
    assert cfg.roll.n_train == 104 and cfg.roll.horizons == (1, 2)
    assert cfg.logging.level == "INFO"


def test_yaml_sections(tmp_path: Path) -> None:
    path = tmp_path / "cfg.yaml"
    path.write_text(
        "fit:\n  basis: bspline\n  k_min: 4\n  k_max: 6\nsimulate:\n  B: 50\n  seed: 3\n  methods: [lm, gls]\n",
        encoding="utf-8",
    )
    cfg = parse_config(load_config(path, "fit"))
    assert cfg.fit.basis == "bspline" and cfg.fit.k_values == (4, 5, 6)
    assert cfg.simulate.replicas == 50 and cfg.simulate.seed == 3
    assert cfg.simulate.methods == ("lm", "gls")


def test_keyvalue_file(tmp_path: Path) -> None:
    path = tmp_path / "sim.conf"
    path.write_text("# comment\nphi = 0.6\n\nsnr=0.1  # trailing\n", encoding="utf-8")
    assert load_keyvalue(path) == {"phi": "0.6", "snr": "0.1"}
    cfg = parse_config(load_config(path, "simulate"))
    assert cfg.simulate.phi == 0.6 and cfg.simulate.snr == 0.1
    path.write_text("phi=0.6\nbroken line\n", encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_keyvalue(path)
    assert ":2:" in str(info.value)


def test_missing_file() -> None:
    with pytest.raises(FileNotFoundError):
        load_config(Path("/nonexistent/cfg.yaml"), "fit")


def test_overrides_win_and_none_is_ignored() -> None:
    raw = {"fit": {"basis": "bspline", "order": 3}}
    merged = merge_overrides(raw, "fit", {"basis": "fpc", "order": None})
    assert merged["fit"] == {"basis": "fpc", "order": 3}
    assert raw["fit"]["basis"] == "bspline"


def test_validation_messages() -> None:
    with pytest.raises(ConfigError) as info:
        parse_config({"simulate": {"phi": 1.2}})
    assert "phi out of (-1,1)" in str(info.value)
    with pytest.raises(ConfigError) as info:
        SimConfig(snr=0.0)
    assert "snr must be > 0" in str(info.value)
    with pytest.raises(ConfigError) as info:
        SimConfig(n=20)
    assert "n must be > 20" in str(info.value)
    with pytest.raises(ConfigError):
        parse_config({"fit": {"order": 2.5}})
    with pytest.raises(ConfigError):
        parse_config({"fit": {"method": "ridge"}})
    with pytest.raises(ConfigError):
        parse_config({"plot": {}})
    with pytest.raises(ConfigError):
        parse_config({"roll": {"cov_family": "spatial"}})


def test_fixed_theta_options() -> None:
    fit = parse_config({"fit": {"theta": 0.4, "k_search": "forward"}}).fit
    assert fit.theta == 0.4 and fit.theta_grid is None and fit.k_search == "forward"
    assert parse_config({"fit": {"theta_grid": "0,0.5;0.9"}}).fit.theta_grid == (0.0, 0.5, 0.9)
    assert parse_config({"fit": {"cov_family": "spatial", "theta": 2.5}}).fit.theta == 2.5
    for bad in (
        {"theta": 0.4, "method": "lm"},
        {"theta": 0.4, "method": "igls"},
        {"theta": 0.4, "cov_family": "hetero_block"},
        {"theta": 0.4, "theta_grid": [0.1]},
        {"theta_grid": [0.5, 1.0]},
        {"theta": 1.0},
        {"cov_family": "spatial", "theta": -1.0},
        {"k_search": "backward"},
    ):
        with pytest.raises(ConfigError):
            parse_config({"fit": bad})


def test_simulation_noise_defaults() -> None:
    assert SimConfig().noise_calibration == "marginal"
    assert SimConfig(scenario="B").noise_calibration == "damped"
    assert SimConfig(scenario="B", noise="marginal").noise_calibration == "marginal"
    cfg = parse_config({"simulate": {"noise": "Damped", "k_selection": "per_method"}}).simulate
    assert cfg.noise_calibration == "damped" and cfg.k_selection == "per_method" and cfg.k_search == "forward"
    with pytest.raises(ConfigError):
        SimConfig(noise="loud")


def test_env_fallback(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("FGLS_TEST_LEVEL", "debug")
    cfg = parse_config({"logging": {"level_env": "FGLS_TEST_LEVEL"}})
    assert cfg.logging.level == "DEBUG"


def test_to_dict_is_plain() -> None:
    d = SimConfig(seed=1, k_values=(1, 2)).to_dict()
    assert d["horizons"] == [1, 5, 10] and d["k_values"] == [1, 2] and d["seed"] == 1


def main() -> None:
    run_tests(
        [
            test_defaults,
            test_yaml_sections,
            test_keyvalue_file,
            test_missing_file,
            test_overrides_win_and_none_is_ignored,
            test_validation_messages,
            test_fixed_theta_options,
            test_simulation_noise_defaults,
            test_to_dict_is_plain,
        ]
    )


if __name__ == "__main__":
    main()
