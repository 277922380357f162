"""Shared fixtures: the two worked examples (apples, ages) in complete
and ablated form."""

from pathlib import Path

import pytest

from rtica.dsl import parse_problem

GOLDEN_DIR = Path(__file__).parent / "golden"

APPLES_COMPLETE = """\
text John bought some apples. He gave 3 to Mary and now has 5 left.
text How many apples did he originally have?
var original
var given_away
var current_left
rel r1: original = given_away + current_left
known given_away = 3
known current_left = 5
goal original
label complete
"""

# "now has 5 left" dropped: the current count is never stated
APPLES_ABLATED = """\
text John bought some apples. He gave 3 to Mary.
text How many apples did he originally have?
var original
var given_away
var current_left
rel r1: original = given_away + current_left
known given_away = 3
goal original
label missing numerical_value current_left "current apple count remaining is undefined"
"""

TRENT_COMPLETE = """\
text Trent is 5 years older than Jane, and Jane is 3 years younger than Quinn.
text If Quinn is 30, how old is Trent?
var trent_age
var jane_age
var quinn_age
rel r1: trent_age = jane_age + 5
rel r2: jane_age = quinn_age - 3
known quinn_age = 30
goal trent_age
label complete
"""

TRENT_WITHOUT_QUINN = """\
text Trent is 5 years older than Jane, and Jane is 3 years younger than Quinn.
text How old is Trent?
var trent_age
var jane_age
var quinn_age
rel r1: trent_age = jane_age + 5
rel r2: jane_age = quinn_age - 3
goal trent_age
label missing numerical_value quinn_age "Quinn's age is not stated"
"""


@pytest.fixture
def apples_complete():
    return parse_problem(APPLES_COMPLETE, "apples")


@pytest.fixture
def apples_ablated():
    return parse_problem(APPLES_ABLATED, "apples_ablated")


@pytest.fixture
def trent_complete():
    return parse_problem(TRENT_COMPLETE, "trent")


@pytest.fixture
def trent_without_quinn():
    return parse_problem(TRENT_WITHOUT_QUINN, "trent_without_quinn")
