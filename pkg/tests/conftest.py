import numpy as np
import pytest

from gaitprint.synthetic import simulate_series

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    if rep.when == "setup" and rep.skipped:
        _CRITERIA[n] = ("SKIP", text, str(rep.longrepr[-1]) if isinstance(rep.longrepr, tuple) else "")
    elif rep.when == "call":
        if rep.skipped:
            reason = rep.longrepr[-1] if isinstance(rep.longrepr, tuple) else ""
            _CRITERIA[n] = ("SKIP", text, str(reason))
        else:
            _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", text, "")
    elif rep.failed:
        _CRITERIA[n] = ("FAIL", text, f"error in {rep.when}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, text, note = _CRITERIA[n]
        line = f"criterion {n:>2}: {status}  {text}"
        if note:
            line += f"  ({note})"
        tr.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sim_series():
    """Six synthetic subjects, 30 one-second frames each."""
    return simulate_series(n_subjects=6, seconds=30, S=100, seed=3)
