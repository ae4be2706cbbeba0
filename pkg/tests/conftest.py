import numpy as np
import pytest

from cpm_auth import _backend
from cpm_auth.config import config_from_dict
from cpm_auth.ofdm import OfdmNumerology

ACCEPTANCE_LINES = []


@pytest.fixture
def num():
    return OfdmNumerology()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=_backend.available_backends())
def kernels(request):
    return _backend.load(request.param)


def small_config(**overrides):
    """Default scenario shrunk for fast tests; keys use config-file layout."""
    data = {"num_packets": 1000}
    data.update(overrides)
    return config_from_dict(data)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
