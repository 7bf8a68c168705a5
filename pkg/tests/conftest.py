import numpy as np
import pytest

from bwnas.lut import LutOptions, SyntheticLatency, build_luts
from bwnas.quant import QuantMenu
from bwnas.space import SearchSpace, default_space
from bwnas.synthnet import make_calibration_set, make_teacher

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def smoke_space():
    return SearchSpace.from_layers([2, 1], [8, 16], 8)


@pytest.fixture(scope="session")
def smoke_setup(smoke_space):
    teacher = make_teacher(smoke_space, 0)
    calib = make_calibration_set(smoke_space, teacher, 2)
    return smoke_space, teacher, calib


@pytest.fixture(scope="session")
def smoke_luts(smoke_setup):
    space, teacher, calib = smoke_setup
    opts = LutOptions(fit=True, latency=SyntheticLatency(), latency_all_bits=True)
    return build_luts(space, teacher, QuantMenu(), calib, opts)


@pytest.fixture(scope="session")
def default_luts():
    """The 18 default-configuration LUTs (built once per session, ~35 s)."""
    space = default_space()
    teacher = make_teacher(space, 0)
    calib = make_calibration_set(space, teacher, 2)
    opts = LutOptions(latency=SyntheticLatency())
    return space, build_luts(space, teacher, QuantMenu(), calib, opts)
