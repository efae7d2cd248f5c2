import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from quantcert.network import Architecture, NetworkParams

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


widths_st = st.lists(st.integers(1, 5), min_size=2, max_size=5).map(tuple)


@st.composite
def networks(draw, widths=widths_st, scale=2.0):
    arch = Architecture(draw(widths))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    vec = rng.uniform(-scale, scale, arch.parameter_dim())
    return NetworkParams.unflatten(arch, vec)


@st.composite
def network_pairs(draw, widths=widths_st, scale=2.0):
    theta = draw(networks(widths, scale))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    vec = rng.uniform(-scale, scale, theta.arch.parameter_dim())
    return theta, NetworkParams.unflatten(theta.arch, vec)
