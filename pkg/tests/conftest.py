import numpy as np
import pytest

from curvflow.mesh import TriMesh
from curvflow.shapes import ShapeSpec, generate

TETRA_VERTS = np.array([
    (1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0),
])
TETRA_FACES = np.array([(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)])


@pytest.fixture(scope="session")
def tetrahedron():
    return TriMesh(TETRA_VERTS, TETRA_FACES)


@pytest.fixture(scope="session")
def icosphere2():
    return generate(ShapeSpec.icosphere(2))


@pytest.fixture(scope="session")
def icosphere3():
    return generate(ShapeSpec.icosphere(3))


def grid_mesh(nx=5, ny=5, lx=1.0, ly=1.0, z_noise=0.0, seed=0):
    """Planar triangulated grid on [0, lx] x [0, ly], optionally jittered in z."""
    xs = np.linspace(0.0, lx, nx)
    ys = np.linspace(0.0, ly, ny)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(nx * ny)])
    if z_noise:
        rng = np.random.default_rng(seed)
        verts[:, 2] = z_noise * rng.standard_normal(nx * ny)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            faces.append((a, b, b + 1))
            faces.append((a, b + 1, a + 1))
    return TriMesh(verts, np.array(faces))


def torus_mesh(nu=16, nv=8, R=2.0, r=0.5):
    us = 2 * np.pi * np.arange(nu) / nu
    vs = 2 * np.pi * np.arange(nv) / nv
    verts = []
    for u in us:
        for v in vs:
            verts.append((
                (R + r * np.cos(v)) * np.cos(u),
                (R + r * np.cos(v)) * np.sin(u),
                r * np.sin(v),
            ))
    faces = []
    for i in range(nu):
        for j in range(nv):
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            a1 = i * nv + (j + 1) % nv
            b1 = ((i + 1) % nu) * nv + (j + 1) % nv
            faces.append((a, b, b1))
            faces.append((a, b1, a1))
    return TriMesh(np.array(verts), np.array(faces))


def random_rotation(seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 3))
    q, _ = np.linalg.qr(a)
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
