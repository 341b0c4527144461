import numpy as np
import pytest

from dyadic_sparse.campaign import make_input
from dyadic_sparse.dyadic import GridFunction


def spike(d: int, L: int, mass: float = 1.0, cell: int = 0, base: float = 1.0) -> GridFunction:
    """Constant ``base`` plus one cell carrying extra mass ``mass``."""
    v = np.full(1 << (d * L), base)
    v[cell] += mass * (1 << (d * L))
    return GridFunction.from_flat(v, d, L)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def adversarial():
    def make(seed, d, L, n=1, kind="spikes"):
        return make_input(np.random.default_rng(seed), d, L, n, kind)
    return make


# criterion number -> verdict line, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
