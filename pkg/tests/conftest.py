import os

import pytest
from hypothesis import settings

from colloid_pavlov.device import DeviceParams

settings.register_profile("default", deadline=None)
settings.load_profile("default")

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

_criteria: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def unit_params():
    """Hand-picked parameters for formula checks (not the calibrated set)."""
    return DeviceParams(r_on=3.8e4, r_off=1.6e6, v_th_pot=4.0, v_th_dep=1.5, k_pot=0.01,
                        k_dep=0.01, alpha=1.0, tau_decay=100.0, w_init=0.01)


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str = "") -> None:
        _criteria[number] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, detail = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
