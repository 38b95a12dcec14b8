import numpy as np
import pytest

_ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def report():
    """Record one acceptance line and fail the test if the criterion is not met."""
    def _report(n, ok, detail):
        _ACCEPTANCE[n] = (bool(ok), detail)
        assert ok, f"criterion {n}: {detail}"
    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
