from __future__ import annotations

import sys
import tempfile
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from fglsreg.core.funcdata import FunctionalSample, Grid, simulate_wiener  # noqa: E402


def wiener_regression(n: int = 60, m: int = 41, seed: int = 0, noise: float = 0.1):
    """Wiener curves, a smooth beta and y = <X, beta> + iid noise."""
    grid = Grid.uniform(0.0, 1.0, m)
    sample = simulate_wiener(n, grid, seed)
    beta = np.sin(np.pi * grid.points) + grid.points
    signal = sample.values @ (grid.weights * beta)
    rng = np.random.default_rng(seed + 1000)
    y = signal + noise * rng.standard_normal(n)
    return sample, y, beta


def ar1_path(n: int, theta: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    e = np.empty(n)
    e[0] = rng.standard_normal() / np.sqrt(1.0 - theta * theta)
    z = rng.standard_normal(n)
    for i in range(1, n):
        e[i] = theta * e[i - 1] + z[i]
    return e


def write_wide_csv(path: Path, sample: FunctionalSample, ids: Iterable[str] | None = None) -> Path:
    ids = list(ids) if ids is not None else [f"c{i}" for i in range(sample.n)]
    header = "id," + ",".join(f"{t:.10g}" for t in sample.grid.points)
    lines = [header] + [f"{ids[i]}," + ",".join(f"{v:.17g}" for v in sample.values[i]) for i in range(sample.n)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_response_csv(path: Path, y: np.ndarray, ids: Iterable[str] | None = None) -> Path:
    ids = list(ids) if ids is not None else [f"c{i}" for i in range(len(y))]
    lines = ["id,y"] + [f"{i},{v:.17g}" for i, v in zip(ids, y)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def run_tests(tests: Iterable[Callable]) -> None:
    """Standalone runner: tests taking ``tmp_path`` get a fresh directory."""
    for test in tests:
        if "tmp_path" in test.__code__.co_varnames[: test.__code__.co_argcount]:
            with tempfile.TemporaryDirectory() as d:
                test(Path(d))
        else:
            test()
    print("OK")
