import itertools
import os
from pathlib import Path

import numpy as np
import pytest

from mrq.dataset import Dataset
from mrq.models import TrainConfig

DATA_DIR = Path(os.environ.get("MRQ_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))


def gaussian_mixture(n=200, d=5, m=3, n_modes=4, noise=0.3, seed=0):
    """Targets drawn around ``n_modes`` prototype vectors chosen by the features."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    protos = rng.normal(scale=3.0, size=(n_modes, m))
    w = rng.normal(size=(d, n_modes))
    mode = np.argmax(X @ w, axis=1)
    Y = protos[mode] + noise * rng.normal(size=(n, m))
    return Dataset.from_arrays(X, Y, name=f"gm{seed}")


def brute_force_qe(points, k):
    """Minimum total squared error over every partition of ``points`` into k nonempty groups."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    best = np.inf
    for labels in itertools.product(range(k), repeat=n):
        if labels[0] != 0 or len(set(labels)) != k:
            continue  # fix the first label to skip relabelings
        lab = np.array(labels)
        total = 0.0
        for c in range(k):
            grp = points[lab == c]
            total += ((grp - grp.mean(axis=0)) ** 2).sum()
        best = min(best, total)
    return best


@pytest.fixture
def small_cfg():
    return TrainConfig(n_trees=5, restarts=3)


@pytest.fixture
def mixture():
    return gaussian_mixture()


# ---------------------------------------------------------------- reporting

_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else outcome.upper():>7}  {name}")
