import numpy as np
import pytest

from hallpump.models import HofstadterParams, build_hofstadter
from hallpump.quasiadiabatic import WeightFilter
from hallpump.systems import make_system

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture(scope="session")
def fam4_free():
    return build_hofstadter(HofstadterParams(L=4, V=0.0))


@pytest.fixture(scope="session")
def fam4_int():
    return build_hofstadter(HofstadterParams(L=4, V=0.25))


@pytest.fixture(scope="session")
def qf4(fam4_free):
    return make_system(fam4_free, 4)


@pytest.fixture(scope="session")
def block4(fam4_int):
    return make_system(fam4_int, 4)


def min_gap(system, n=17):
    return min(system.spectrum(x).gap for x in np.linspace(0, 2 * np.pi, n))


@pytest.fixture(scope="session")
def filt_qf4(qf4):
    return WeightFilter(0.8 * min_gap(qf4))


@pytest.fixture(scope="session")
def filt_block4(block4):
    return WeightFilter(0.8 * min_gap(block4))
