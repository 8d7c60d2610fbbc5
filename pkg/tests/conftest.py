import numpy as np
import pytest

from smoothswitch.data import gen_synthetic, split
from smoothswitch.model import Batch, ModelSpec, ParameterVector


def random_case(seed: int):
    """A small random (spec, params, batch) triple; odd seeds get a hidden layer."""
    rng = np.random.default_rng(1000 + seed)
    d = int(rng.integers(1, 6))
    m = int(rng.integers(2, 6))
    hidden = [] if seed % 2 == 0 else [int(rng.integers(2, 6))]
    spec = ModelSpec(d, m, hidden)
    params = ParameterVector(rng.normal(0, 0.5, spec.param_count))
    n = int(rng.integers(1, 8))
    batch = Batch(rng.normal(size=(n, d)), rng.integers(0, m, n))
    return spec, params, batch


@pytest.fixture(scope="session")
def small_split():
    return split(gen_synthetic(3, n_samples=1000), 0.8, 3)


# one line per acceptance criterion, echoed again at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
