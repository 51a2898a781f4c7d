import math

import pytest

from modsurf import grid as G


@pytest.fixture(scope="session")
def euclid65():
    return G.make_euclidean(65, 65, 1 / 64)


@pytest.fixture(scope="session")
def linf129():
    return G.make_linf(129, 129, 1 / 128, math.pi / 4)


@pytest.fixture(scope="session")
def cantor2():
    return G.make_cantor_weight(2, [0.5, 0.5])
