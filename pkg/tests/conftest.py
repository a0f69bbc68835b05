from pathlib import Path

import numpy as np
import pytest

from mixspec.dataset import MixedDataMatrix

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
DATA = ROOT / "data"


def random_mixed(n=30, p1=3, levels=(2, 3), beta=1.0, seed=0, n_classes=2):
    """Random MixedDataMatrix with one-hot groups and labels."""
    rng = np.random.default_rng(seed)
    num = rng.uniform(-beta, beta, size=(n, p1))
    blocks, groups, start = [], [], 0
    for m in levels:
        codes = rng.integers(0, m, size=n)
        blocks.append(np.where(codes[:, None] == np.arange(m), 1.0, -1.0))
        groups.append(tuple(range(start, start + m)))
        start += m
    labels = rng.integers(0, n_classes, size=n)
    return MixedDataMatrix(num, np.hstack(blocks), beta=beta, labels=labels,
                           categorical_groups=tuple(groups))


@pytest.fixture
def mixed():
    return random_mixed()


@pytest.fixture
def write_csv(tmp_path):
    def write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return write


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one summary line per acceptance criterion; printed at the end of the run."""
    log = getattr(request.config, "_acceptance_lines", None)
    if log is None:
        log = request.config._acceptance_lines = {}
    return log


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
