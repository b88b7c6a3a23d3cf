import numpy as np
import pytest

from morphreg import kernels
from morphreg.model import generate_synthetic_model

_acceptance = []


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def small_model():
    return generate_synthetic_model(seed=3, n_vertices=64, n_shape=10, n_texture=8)


@pytest.fixture(scope="session")
def default_model():
    return generate_synthetic_model(seed=0, n_vertices=400, n_shape=99, n_texture=99)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = dict(report.keywords).get("acceptance")
    if marker is None:
        return
    name = getattr(report, "acceptance_name", None) or report.nodeid.split("::")[-1]
    _acceptance.append((name, report.passed, report.duration))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep.acceptance_name = m.args[0] if m.args else item.name


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, duration in _acceptance:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  ({duration:.2f} s)")
