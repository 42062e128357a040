import numpy as np
import pytest

from tsacl.data import SyntheticSpec, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_pair():
    spec = SyntheticSpec(num_classes=6, subjects_per_class=2, samples_per_subject=5, channels=3, length=32, seed=3)
    return generate_synthetic(spec)


def relu_embeddings(rng, n, d):
    """Non-negative embeddings shaped like RHL outputs."""
    return np.maximum(rng.standard_normal((n, d)), 0.0)


_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion of the build")


def pytest_runtest_logreport(report):
    crit = getattr(report, "acceptance", None)
    if crit is None:
        return
    if report.when == "call" or report.failed:
        _ACCEPTANCE[crit] = report.outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result().acceptance = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), outcome in sorted(_ACCEPTANCE.items()):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}")
