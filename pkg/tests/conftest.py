from fractions import Fraction

import pytest

GEOMETRIC = (Fraction(1), Fraction(1, 2), Fraction(1, 4), Fraction(1, 8))
MIXED = (Fraction(1), Fraction(1, 2), Fraction(-1, 3), Fraction(1, 4))


@pytest.fixture
def geometric():
    return GEOMETRIC
