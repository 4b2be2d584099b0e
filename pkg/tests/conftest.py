import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# one summary line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def record():
    def rec(criterion: int, label: str, ok: bool, detail: str = ""):
        ACCEPTANCE.setdefault(criterion, []).append((label, bool(ok), detail))
    return rec


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        rows = ACCEPTANCE[k]
        ok = all(r[1] for r in rows)
        tr.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}")
        for label, good, detail in rows:
            tr.write_line(f"    [{'ok' if good else 'FAIL'}] {label}: {detail}")
