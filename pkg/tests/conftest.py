from __future__ import annotations

import numpy as np
import pytest

from germgrain.geometry import indicator_interval

ACCEPTANCE: dict = {}


def record(key: str, ok: bool, detail: str) -> None:
    """Store one acceptance line; printed again in the terminal summary."""
    line = f"criterion {key}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE[key] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    order = lambda k: (int("".join(c for c in k if c.isdigit()) or 0), k)
    for key in sorted(ACCEPTANCE, key=order):
        terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_interval():
    return indicator_interval(0.0, 1.0)
