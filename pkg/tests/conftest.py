import pytest
import scipy.linalg

from efimovlab.hubbard import Example5Params, example_model
from efimovlab.operators import assemble_H

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None and rep.when == "call":
        number, title = marker.args
        _ACCEPTANCE.append((number, title, rep.outcome, rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, duration in sorted(_ACCEPTANCE):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} ({duration:.1f} s)")


@pytest.fixture(scope="session")
def model44():
    """Example model at gamma = 2/3, M = N = 4, g = 8 (72 x 72 grid)."""
    return example_model(Example5Params(M=4, N=4))


@pytest.fixture(scope="session")
def H44(model44):
    return assemble_H(model44)


@pytest.fixture(scope="session")
def H44_eigenvalues(H44):
    return scipy.linalg.eigh(H44.matrix, eigvals_only=True)
