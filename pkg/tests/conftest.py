import numpy as np
import pytest

from sparsegrid import gridsim


@pytest.fixture(scope="session")
def small_records():
    """Twenty 1 s records at 2 kHz, half of them faulted."""
    return list(gridsim.iter_records(20, seed=3, fs=2000))


@pytest.fixture(scope="session")
def fault_record():
    p = gridsim.randomize_params(11)
    return gridsim.simulate(p, 2000, record_id=11)


def rms(x, axis=-1):
    return np.sqrt(np.mean(np.square(np.asarray(x, dtype=np.float64)), axis=axis))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
