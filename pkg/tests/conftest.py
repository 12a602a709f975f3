import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from infserv.model import ServiceLaw

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


class NoService(ServiceLaw):
    """Test-only law with zero hazard: customers never leave."""

    kind = "none"

    def hazard(self, t):
        return 0.0 * np.asarray(t, dtype=float)

    def cumulative_hazard(self, t):
        return 0.0 * np.asarray(t, dtype=float)

    def integrated_survival(self, t):
        return t

    def residual(self, s, e):
        return math.inf

    def hazard_bound(self, s, window):
        return 0.0

    def scaled_hazard_infimum(self):
        return 0.0, 0.0

    def params(self):
        return {}


@pytest.fixture
def no_service():
    return NoService()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
