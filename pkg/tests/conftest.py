import numpy as np
import pytest

from sdtwreg import kernels


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    mod = kernels.backends()[request.param]
    for name in ("softmin3", "sdtw_forward", "sdtw_backward", "dtw_table", "sdtw_value_grad", "cidm"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
