from pathlib import Path

import numpy as np
import pytest

from cachesched import kernels
from cachesched.scenario import ScenarioConfig, load_scenario

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

_ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def _report(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    return kernels.BACKENDS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_config(**overrides):
    fields = dict(cell_radius=500.0, cache_count=3, cache_service_radius=90.0, antennas=8,
                  pathloss_exponent=3.5, shadowing_sigma_db=6.0, noise_power=1e-11, file_bits=14e6,
                  segments=2, request_rate=0.004, lifetime=1000.0, w_e=1.0, w_t=100.0, seed=7)
    fields.update(overrides)
    return ScenarioConfig(**fields)


@pytest.fixture
def cfg():
    return small_config()


@pytest.fixture(scope="session")
def tiny_cfg():
    return load_scenario(CONFIG_DIR / "tiny.cfg")


@pytest.fixture(scope="session")
def cell20_cfg():
    return load_scenario(CONFIG_DIR / "cell20.cfg")


@pytest.fixture(scope="session")
def hotzone_cfg():
    return load_scenario(CONFIG_DIR / "hotzones3.cfg")

