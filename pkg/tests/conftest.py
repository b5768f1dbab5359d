"""Shared fixtures and the PASS/FAIL summary for the acceptance suite."""

import numpy as np
import pytest

from ernwave.fields import GridSpec, make_grid
from ernwave.geometry import SpacetimeParams

_ACCEPTANCE: dict[str, list[tuple[bool, list[str]]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    details = [v for k, v in report.user_properties if k == "detail"]
    if report.when == "call" or (report.when == "setup" and report.failed):
        # several tests may share a criterion; it passes only if all do
        _ACCEPTANCE.setdefault(props["criterion"], []).append((report.passed, details))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: int(k.split()[0])):
        results = _ACCEPTANCE[key]
        outcome = "PASS" if all(ok for ok, _ in results) else "FAIL"
        detail = "; ".join(d for _, ds in results for d in ds)
        terminalreporter.write_line(f"{outcome} criterion {key}: {detail}")


@pytest.fixture
def criterion(request, record_property):
    """Register ``(number, title)``; call ``.detail(text)`` to attach numbers."""
    mark = request.node.get_closest_marker("criterion")
    key = f"{mark.args[0]} {mark.args[1]}"
    request.node.user_properties.append(("criterion", key))

    class _Rec:
        def detail(self, text):
            request.node.user_properties.append(("detail", text))
            print(f"criterion {key}: {text}")

    return _Rec()


@pytest.fixture
def params():
    return SpacetimeParams(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_grid():
    return make_grid(GridSpec(n_r=121, r_max=30.0, n_theta=8))
