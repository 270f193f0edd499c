import math
from pathlib import Path

import numpy as np
import pytest

from etmslr.data import SemiDataset

DATA_DIR = Path(__file__).parent / "data"


def random_semi(seed, p=2, sizes=None, rho=0.4, beta1=None, shift=1.0):
    """Small ETM-like dataset with Gaussian classes separated along beta1."""
    rng = np.random.default_rng(seed)
    if sizes is None:
        sizes = (int(rng.integers(15, 40)), int(rng.integers(15, 40)), int(rng.integers(30, 150)))
    if beta1 is None:
        beta1 = shift * rng.normal(size=p)
    beta1 = np.asarray(beta1, float)
    n1, n2, n3 = sizes
    x1 = rng.normal(size=(n1, p))
    x2 = rng.normal(size=(n2, p)) + beta1
    lab = rng.random(n3) < rho
    x3 = rng.normal(size=(n3, p)) + np.outer(lab, beta1)
    return SemiDataset(x1, x2, x3)


def central_diff(f, x, step=1e-5):
    x = np.asarray(x, float)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def rel_err(g, g_fd, floor=1e-3):
    return float(np.linalg.norm(np.asarray(g) - g_fd) / max(np.linalg.norm(g), floor))


@pytest.fixture
def data_dir():
    return DATA_DIR


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
