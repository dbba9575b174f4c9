import numpy as np
import pytest

from rebalance.targets import synthetic_german_credit, write_german_credit


@pytest.fixture(scope="session")
def german_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "german.data-numeric"
    write_german_credit(path, synthetic_german_credit())
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
