import numpy as np
import pytest

from perfact.grid_fem import SeparableSinSq, ZeroPotential
from perfact.pipeline import build_setup


@pytest.fixture(scope="session")
def small_setup():
    """L=4 slab problem with the sin potential on a coarse mesh."""
    return build_setup(1, 1, 4, 1.0, 6, SeparableSinSq(), "slabs", N=4, delta=1, pu="distance")


@pytest.fixture(scope="session")
def zero_setup():
    return build_setup(1, 1, 4, 1.0, 4, ZeroPotential(), "unit-cells", delta=1, pu="distance")


@pytest.fixture
def rng():
    return np.random.default_rng(42)


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store one acceptance line: record(number, passed, detail, seconds)."""
    def _record(number, passed, detail, seconds):
        ACCEPTANCE[number] = (bool(passed), detail, seconds)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail, sec = ACCEPTANCE[k]
        terminalreporter.write_line(
            f"ACCEPTANCE criterion {k}: {'PASS' if ok else 'FAIL'} ({sec:.1f} s) {detail}")
