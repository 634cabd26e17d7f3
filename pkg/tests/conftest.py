import numpy as np
import pytest

from mpdsa.configspace import LatticeGeometry


@pytest.fixture(scope="session", autouse=True)
def _warm_blas():
    # first large eigh triggers one-time OpenBLAS kernel selection
    np.linalg.eigh(np.eye(600))


@pytest.fixture(scope="session")
def line():
    return LatticeGeometry(kind="lattice", d=1)


@pytest.fixture(scope="session")
def plane():
    return LatticeGeometry(kind="lattice", d=2)


@pytest.fixture(scope="session")
def path_graph():
    # 0 - 1 - 2 - 3 - 4
    adj = ((1,), (0, 2), (1, 3), (2, 4), (3,))
    return LatticeGeometry(kind="graph", d=1, growth_constant=3.0, adjacency=adj)
