import pytest

from irsbf.numerics import RngStream

from helpers import random_channel


@pytest.fixture
def rng():
    return RngStream(1234, 0)


@pytest.fixture
def make_channel():
    return random_channel
