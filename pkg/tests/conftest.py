"""Shared parameter factories for the test suite."""

import sys

import numpy as np
import pytest

from dispersim.model import DriveProfile, SystemParams


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo acceptance verdict lines after the run, unaffected by capture."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None) if mod is not None else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def weak_params():
    """Small-chi working point: g = -/+15, detuning 150, constant drive."""
    return SystemParams(
        g=(-15.0, 15.0),
        delta_qc=(150.0, 150.0),
        drive=DriveProfile(shape="constant", eps=0.5),
    )


@pytest.fixture
def strong_params():
    """Large-chi working point: g = -/+100, detuning 1000, tanh ramp drive."""
    return SystemParams(
        g=(-100.0, 100.0),
        delta_qc=(1000.0, 1000.0),
        drive=DriveProfile(shape="tanh", eps=1.0, sigma=1.0),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
