import math

import pytest

from solitonqm.spinor_soliton import ModelParams, normalize_profile, shoot_ground_state

_SUMMARY: list[str] = []


@pytest.fixture(scope="session")
def criteria():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(number: int, passed: bool, text: str) -> bool:
        _SUMMARY.append(f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}: {text}")
        print(_SUMMARY[-1])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_SUMMARY, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


_PROFILES: dict = {}


def solved(omega: float):
    if omega not in _PROFILES:
        _PROFILES[omega] = shoot_ground_state(ModelParams(ell0=1.0, lam=4 * math.pi, omega=omega))
    return _PROFILES[omega]


@pytest.fixture(scope="session")
def ground_state():
    """Shot profile at the default frequency 0.9 (cached per session)."""
    return solved(0.9)


@pytest.fixture(scope="session")
def shot():
    return solved


@pytest.fixture(scope="session")
def normalized(ground_state):
    return normalize_profile(ground_state)[0]
