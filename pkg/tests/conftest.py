import numpy as np
import pytest

from mixnet.dataset import Column, Dataset, Schema
from mixnet.gmm import EmConfig
from mixnet.mixtable import TableConfig
from mixnet.structure import SearchConfig

FAST_EM = EmConfig(component_grid=(1, 2, 3), restarts=2, max_iterations=100)
FAST_TABLE = TableConfig(em=FAST_EM)
FAST_SEARCH = SearchConfig(table=FAST_TABLE)


def continuous_schema(*names):
    return Schema(tuple(Column(n, "continuous") for n in names))


def mixed_data(n=400, seed=0):
    """Two continuous columns and one binary column, with x2 depending on
    x1 and x1 shifted by d."""
    rng = np.random.default_rng(seed)
    d = (rng.random(n) < 0.4).astype(float)
    x1 = np.clip(0.3 + 0.3 * d + rng.normal(0, 0.08, n), 0, 1)
    x2 = np.clip(0.8 - 0.6 * x1 + rng.normal(0, 0.05, n), 0, 1)
    schema = Schema((Column("x1", "continuous"), Column("x2", "continuous"), Column("d", "discrete", 2)))
    return Dataset(schema, np.column_stack([x1, x2, d]))


@pytest.fixture
def mixed():
    return mixed_data()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
