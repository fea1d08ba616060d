import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from tunnelnav import tunnel  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def straight():
    return tunnel.build(tunnel.TunnelSpec(kind="straight", radius_m=2.0, length_m=60.0))


@pytest.fixture(scope="session")
def horseshoe():
    return tunnel.build(tunnel.TunnelSpec(kind="straight", radius_m=2.0, profile="horseshoe", length_m=60.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def deg(x):
    return math.radians(x)


# -- acceptance report ------------------------------------------------------


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        assert ok, line

    return record
