import math

import pytest

from qdyne.chain import ChainConfig
from qdyne.dynamics import PulseSequence
from qdyne.noise import OuParams
from qdyne.physics import Sensor, SignalField, derive_rotating_frame

TWO_PI = 2 * math.pi

# Shared parameter set: 50 kHz coupling, 0.5 us spacing, 1.000232 MHz beat.
K_S = TWO_PI * 50e3
TAU = 0.5e-6
DELTA = TWO_PI * 1.000232e6
OMEGA = TWO_PI * 1801.501232e6
OMEGA0 = OMEGA - DELTA
T_L = 1e-4


@pytest.fixture
def field():
    return SignalField(OMEGA, 0.0, (K_S, 0.0, 0.0))


@pytest.fixture
def sensor():
    return Sensor(OMEGA0)


@pytest.fixture
def rf(field, sensor):
    return derive_rotating_frame(field, sensor)


@pytest.fixture
def seq9():
    return PulseSequence("CPMG", TAU, 9)


@pytest.fixture
def ou():
    return OuParams(4e-3, TWO_PI * 100e3)


@pytest.fixture
def chain_cfg(seq9):
    def make(n_runs, mode="analytic", seed=0, **kw):
        t_s = seq9.duration
        return ChainConfig(t_s, 5e-6, T_L - t_s - 5e-6, n_runs, mode, seed, **kw)

    return make


# -- acceptance reporting -------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = getattr(item, "criterion_detail", "")
        _CRITERIA[number] = (title, report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {number:>2} [{verdict}] {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
