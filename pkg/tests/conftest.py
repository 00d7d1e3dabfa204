import numpy as np
import pytest

from fedvrdp.config import from_dict
from fedvrdp.model import Dataset

_REPORT = []


def record(criterion, passed, detail=""):
    """Store one acceptance line; all lines are printed at the end of the session."""
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    _REPORT.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n=12, m=4, c=3):
    labels = rng.integers(0, c, size=n)
    return Dataset(rng.standard_normal((n, m)), labels, c)


def small_config(**overrides):
    """A fast synthetic experiment; ``overrides`` use dotted keys."""
    base = {
        "seed": 3,
        "n": 10,
        "s": 5,
        "T": 3,
        "dataset": {"kind": "synthetic", "num_classes": 3, "dim": 4, "train_size": 200, "test_size": 60},
        "trainer": {"eta": 0.1, "kappa": 1.0, "tau": 2, "batch_size": 5},
    }
    cfg = from_dict(base)
    return cfg.replace(**overrides) if overrides else cfg
