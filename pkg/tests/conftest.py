"""Shared fixtures for the qsmetric test suite."""

from fractions import Fraction

import pytest

from qsmetric.weights import Params


@pytest.fixture
def params_8():
    """n=2, M=8, L=8: the reference parameters used throughout."""
    return Params(n=2, M=8, L=Fraction(8))


@pytest.fixture
def params_16():
    return Params(n=2, M=16, L=Fraction(16))


@pytest.fixture
def capped_16():
    return Params(n=2, M=16, L=Fraction(16), capped=True)


@pytest.fixture
def params_3d():
    return Params(n=3, M=8, L=Fraction(8))
