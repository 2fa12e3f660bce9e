import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, merging its sub-checks."""
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted({r[0] for r in RESULTS}):
        rows = [r for r in RESULTS if r[0] == number]
        ok = all(r[1] for r in rows)
        failed = [r[2].split(":", 1)[0].split(" ", 1)[1] for r in rows if not r[1]]
        note = f"  (failing: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}{note}")
        for r in rows:
            terminalreporter.write_line(f"    {r[2]}")
