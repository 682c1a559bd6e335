import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "polyot",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "polyot"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance(request):
    """Record one acceptance line; the summary hook prints them all."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    def record(number: int, name: str, ok: bool, detail: str = "") -> None:
        lines[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {name}" + (
            f" ({detail})" if detail else ""
        )
        print(lines[number])

    return record


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
