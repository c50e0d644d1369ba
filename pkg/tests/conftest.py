import sys
from pathlib import Path

import numpy as np
import pytest

# test helpers (logic_oracle, randprog, glyph fixtures) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))

from vael.logic import ground, parse_program

BINARY_DIGITS_TEXT = """
nn::digit(img,1,0); nn::digit(img,1,1).
nn::digit(img,2,0); nn::digit(img,2,1).
add(img,Z) :- digit(img,1,Y1), digit(img,2,Y2), Z is Y1 + Y2.
query(add(img,Y)).
"""


@pytest.fixture(scope="session")
def binary_digits_gp():
    return ground(parse_program(BINARY_DIGITS_TEXT))


@pytest.fixture(scope="session")
def ten_digit_gp():
    from vael.logic import addition_program

    return ground(parse_program(addition_program(range(10))))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
