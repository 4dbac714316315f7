import numpy as np
import pytest

from microcsi.evaluation import Scenario
from microcsi.sim import make_device_profile, make_los_channel, synthesize_csi

_acceptance = {}


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        for key, value in report.user_properties:
            if key == "criterion":
                crit = value
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[crit] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_acceptance, key=lambda c: int(c.split()[0])):
        outcome, dur = _acceptance[crit]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {crit} ({dur:.1f} s)")


@pytest.fixture
def criterion(record_property):
    def _mark(label):
        record_property("criterion", label)
    return _mark


@pytest.fixture
def profile():
    return make_device_profile(seed=7, intensity=0.04, device_id="dut")


@pytest.fixture
def channels():
    return [make_los_channel(seed=100 + c) for c in range(4)]


@pytest.fixture
def packets(profile, channels):
    return synthesize_csi(profile, channels, snr_db=34.0, n_packets=40, seed=3)


@pytest.fixture(scope="session")
def small_scenario():
    return Scenario(n_devices=4, n_rx=2, n_packets=200, seed=11, n_models=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
