import numpy as np
import pytest

from biot_mrfem.mesh import all_natural_bc, unit_square_mesh
from biot_mrfem.system import MaterialParams


@pytest.fixture
def mesh4():
    return unit_square_mesh(4)


@pytest.fixture
def mesh8():
    return unit_square_mesh(8)


@pytest.fixture
def benign_params():
    return MaterialParams(mu=1.0, lam=1.0, alpha=1.0, c0=0.1, K=1.0, dt=0.01)


@pytest.fixture
def hard_params():
    return MaterialParams(mu=1.0, lam=1e4, alpha=1.0, c0=0.0, K=1e-6, dt=0.01)


def natural_bc(mesh, case=None):
    if case is None:
        return all_natural_bc(mesh)
    return all_natural_bc(mesh, u0=case.u0, sigma0=case.sigma0, p0=case.p0)


def state_vector(state):
    return np.concatenate([state.r, state.u, state.q, state.p])
