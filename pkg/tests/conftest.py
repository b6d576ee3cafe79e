import numpy as np
import pytest

from dbini.field import GridShape, build_domain


def disk(h, w, radius, center=None):
    cy, cx = ((h - 1) / 2, (w - 1) / 2) if center is None else center
    v, u = np.mgrid[0:h, 0:w]
    return (u - cx) ** 2 + (v - cy) ** 2 <= radius ** 2


def constant_normals(shape, n):
    n = np.asarray(n, dtype=np.float64)
    n = n / np.linalg.norm(n)
    return np.broadcast_to(n, shape + (3,)).copy()


def plane_normals(shape, gx, gy, sign=1.0):
    """Unit normals whose ratios give dz/du = gx and dz/dv = gy (pitch 1)."""
    # n_z * dz/du = -n_x  =>  n ~ (-gx, -gy, 1)
    return constant_normals(shape, sign * np.array([-gx, -gy, 1.0]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def disk_domain():
    m = disk(16, 16, 6.5)
    return build_domain(m, m, GridShape(16, 16))
