import numpy as np
import pytest

from hmmvi import PolytopalMesh, build_gd


@pytest.fixture
def unit_square_mesh():
    return PolytopalMesh(
        np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
        [[0, 1, 2, 3]])


@pytest.fixture
def unit_square_gd(unit_square_mesh):
    return build_gd(unit_square_mesh)
