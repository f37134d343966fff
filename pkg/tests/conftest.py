import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from advnids.detectors import fit_surrogate  # noqa: E402
from advnids.features import ExtractorState  # noqa: E402
from advnids.synthetic import CorpusConfig, generate_corpus  # noqa: E402

SMALL_CORPUS = CorpusConfig(n_devices=4, duration=600.0, burst_len=30, seed=3)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SMALL_CORPUS)


@pytest.fixture(scope="session")
def small_warm(small_corpus):
    """(extractor state after the benign capture, benign feature rows)."""
    state = ExtractorState()
    X = state.extract_all(small_corpus[0])
    return state, X


@pytest.fixture(scope="session")
def small_surrogate(small_warm):
    return fit_surrogate(small_warm[1], seed=0)


_acceptance: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion_" in report.nodeid:
        _acceptance.append((report.nodeid.rsplit("::", 1)[1], "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        for name, status in _acceptance:
            terminalreporter.write_line(f"{status} {name}")
