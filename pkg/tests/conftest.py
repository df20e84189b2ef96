import numpy as np
import pytest

from bsdelab.core import DiffusionSpec
from bsdelab.families import make_driver

_CRITERIA = {}
_CASE_CACHE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, text = mark.args
    _CRITERIA[n] = (text, rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        text, ok = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture(scope="session")
def case_result():
    """Run a bundled case once per session and hand back its :class:`CaseResult`."""
    from bsdelab.cases import CATALOG
    from bsdelab.config import config_for_case

    def get(name):
        if name not in _CASE_CACHE:
            _CASE_CACHE[name] = CATALOG[name].run(config_for_case(name))
        return _CASE_CACHE[name]

    return get


@pytest.fixture
def bm():
    """Standard Brownian motion in 1D."""
    return DiffusionSpec.constant(1.0, 0.0, 1)


@pytest.fixture
def discount_driver():
    return make_driver({"family": "linear", "r": 1.0}, None, {"family": "constant", "c": 1.0})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
