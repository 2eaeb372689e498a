import numpy as np
import pytest

from acoustoelastic.assembly import MaterialParams, assemble_system
from acoustoelastic.mesh import generate_disk_annulus
from acoustoelastic.radial_map import IdentityMap, RadialMap

SOFT = MaterialParams(c=1.0, rho1=1.0, rho2=2.0, mu=1.0, lam=1.0)


@pytest.fixture(scope="session")
def rmap():
    return RadialMap(1.0, 2.0, 6.0)


@pytest.fixture(scope="session")
def coarse_mesh():
    return generate_disk_annulus(0.5, 1.0, 2.0, 8, 32)


@pytest.fixture(scope="session")
def coarse_system(coarse_mesh, rmap):
    return assemble_system(coarse_mesh, rmap, SOFT)


@pytest.fixture(scope="session")
def identity_system(coarse_mesh):
    return assemble_system(coarse_mesh, IdentityMap(2.0), SOFT)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
