import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from tdgeo.mrp import random_mrp, td_matrix

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

gammas = st.sampled_from([0.5, 0.9, 0.99])
sizes = st.integers(2, 8)
seeds = st.integers(0, 2**31 - 1)


@st.composite
def geometries(draw, n=sizes, gamma=gammas):
    return td_matrix(random_mrp(draw(n), draw(gamma), draw(seeds)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
