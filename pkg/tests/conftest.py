import numpy as np
import pytest


# criterion number -> list of (part, passed, detail), filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{name} {'ok' if ok else 'FAILED'} ({d})" for name, ok, d in parts)
        terminalreporter.write_line(f"ACCEPTANCE {k}: {verdict}  {detail}")
