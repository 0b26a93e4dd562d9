import sys

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("pnp", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("pnp")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
