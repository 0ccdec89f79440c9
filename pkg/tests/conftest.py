import numpy as np
import pytest

from qd_model.config import PROBLEMS_DIR
from qd_model.polytope import Polytope
from qd_model.quasidiff import Quasidifferential


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def random_polytope(rng):
    """Фабрика: многогранник из k случайных точек в R^dim."""
    def make(k=3, dim=2, spread=1.0):
        return Polytope(rng.uniform(-spread, spread, size=(k, dim)))
    return make


@pytest.fixture
def random_qd(random_polytope):
    def make(dim=2, k_sub=3, k_super=2):
        return Quasidifferential(random_polytope(k_sub, dim), random_polytope(k_super, dim))
    return make


@pytest.fixture
def problems_dir():
    return PROBLEMS_DIR
