import numpy as np
import pytest

from ptsense import kernels

BACKENDS = sorted(kernels.available_backends())
KERNEL_NAMES = ("toeplitz_apply", "toeplitz_adjoint", "toeplitz_expand", "toeplitz_block_matvecs")


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route the operator kernels through each available backend in turn."""
    mod = kernels.available_backends()[request.param]
    for name in KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
