"""Shared fixtures: oracle chains and kernels"""

import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from chains import Ar1Chain, independent_finite_chain, two_state_chain  # noqa: E402
from kernels import get_kernel  # noqa: E402


@pytest.fixture
def symmetric_two_state():
    """{-1, +1}, p = q = 0.3, second eigenvalue 0.4"""
    return two_state_chain(0.3, 0.3)


@pytest.fixture
def indicator_two_state():
    """{0, 1}, p = q = 0.3"""
    return two_state_chain(0.3, 0.3, values=(0.0, 1.0))


@pytest.fixture
def independent_chain():
    return independent_finite_chain([-1.0, 0.0, 2.0], [0.2, 0.5, 0.3])


@pytest.fixture
def ar1_half():
    return Ar1Chain(rho=0.5)


@pytest.fixture
def gaussian():
    return get_kernel("gaussian")
