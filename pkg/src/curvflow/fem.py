"""Hat-basis mass and stiffness assembly and the discrete Dirichlet energy.

Sign conventions: the mass matrix ``D`` is positive definite with
``D.sum() == surface area``; the stiffness ``L`` has positive cotangent
off-diagonals and ``L_ii = -sum_j L_ij``, so rows sum to zero and the
quadratic form ``-x^T L x`` is the (non-negative) Dirichlet form.

Assembly is a vectorized scatter of 3x3 element contributions (Galerkin
mass, not lumped). Cotangents come from edge-vector dot/cross ratios, no
trigonometric calls.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .errors import DegenerateTriangleError, DimensionMismatchError
from .mesh import TriMesh, triangle_areas

# Reassembly rejects triangles whose area falls below this fraction of the
# current mean area: a concrete, scale-free trigger for collapse.
DEGENERACY_RATIO = 1e-12


def _positions(mesh: TriMesh, positions) -> np.ndarray:
    if positions is None:
        return mesh.vertices
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (mesh.n_vertices, 3):
        raise DimensionMismatchError(
            f"positions shape {positions.shape} != ({mesh.n_vertices}, 3)"
        )
    return positions


def _scatter_symmetric(n, t0, t1, t2, off01, off12, off20, d0, d1, d2):
    # Both halves of each off-diagonal entry are written from the same
    # per-triangle value, in matching block order, so the assembled matrix
    # is bitwise symmetric.
    rows = np.concatenate([t0, t1, t2, t1, t2, t0, t0, t1, t2])
    cols = np.concatenate([t1, t2, t0, t0, t1, t2, t0, t1, t2])
    vals = np.concatenate([off01, off12, off20, off01, off12, off20, d0, d1, d2])
    return sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()


def assemble_mass(mesh: TriMesh, positions=None, face_mask=None) -> sparse.csc_matrix:
    """Galerkin mass matrix: off-diagonal (i,j) is (incident areas)/12,
    diagonal is the row sum of the off-diagonals.

    ``positions`` overrides the mesh's rest positions (same connectivity);
    ``face_mask`` restricts assembly to a subset of triangles. Degenerate
    triangles contribute zero; mass assembly never raises for them.
    """
    pos = _positions(mesh, positions)
    faces = mesh.faces if face_mask is None else mesh.faces[face_mask]
    t0, t1, t2 = faces[:, 0], faces[:, 1], faces[:, 2]
    areas = triangle_areas(pos, faces)
    off = areas / 12.0
    diag = areas / 6.0
    return _scatter_symmetric(mesh.n_vertices, t0, t1, t2, off, off, off, diag, diag, diag)


def assemble_stiffness(
    mesh: TriMesh, positions=None, face_mask=None, clamp: bool = False
) -> sparse.csc_matrix:
    """Cotangent stiffness: off-diagonal (i,j) is (cot b1 + cot b2)/2 over the
    angles opposite edge (i,j); diagonal is the negated row sum.

    No cotangent clamping by default: the flow relies on the solver losing
    positive definiteness to detect singularities, and clamping would mask
    that. ``clamp=True`` zeroes negative per-corner cotangents for
    robustness experiments only.

    Raises
    ------
    DegenerateTriangleError
        If any assembled triangle's area is below ``DEGENERACY_RATIO``
        times the current mean triangle area.
    """
    pos = _positions(mesh, positions)
    faces = mesh.faces if face_mask is None else mesh.faces[face_mask]
    t0, t1, t2 = faces[:, 0], faces[:, 1], faces[:, 2]
    p0, p1, p2 = pos[t0], pos[t1], pos[t2]
    e0 = p2 - p1  # edge opposite corner 0
    e1 = p0 - p2
    e2 = p1 - p0
    cr = np.cross(e1, e2)
    double_area = np.sqrt(np.einsum("ij,ij->i", cr, cr))
    areas = 0.5 * double_area
    mean_area = areas.mean() if areas.size else 0.0
    bad = areas < DEGENERACY_RATIO * mean_area
    if bad.any() or mean_area <= 0.0:
        tri = int(np.argmax(bad)) if areas.size else -1
        raise DegenerateTriangleError(
            f"triangle {tri} degenerate during assembly "
            f"(area {areas[tri]:.3e}, mean {mean_area:.3e})",
            triangle=tri,
        )
    cot0 = -np.einsum("ij,ij->i", e1, e2) / double_area
    cot1 = -np.einsum("ij,ij->i", e2, e0) / double_area
    cot2 = -np.einsum("ij,ij->i", e0, e1) / double_area
    if clamp:
        cot0 = np.maximum(cot0, 0.0)
        cot1 = np.maximum(cot1, 0.0)
        cot2 = np.maximum(cot2, 0.0)
    # corner k sits opposite the edge formed by the other two corners
    w12, w20, w01 = 0.5 * cot0, 0.5 * cot1, 0.5 * cot2
    return _scatter_symmetric(
        mesh.n_vertices, t0, t1, t2,
        w01, w12, w20,
        -(w01 + w20), -(w12 + w01), -(w20 + w12),
    )


def dirichlet_energy(L: sparse.spmatrix, positions: np.ndarray) -> float:
    """Discrete Dirichlet energy ``0.5 * sum_coords x^T (-L) x``; >= 0 up to roundoff."""
    x = np.asarray(positions, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if L.shape[0] != x.shape[0]:
        raise DimensionMismatchError(f"L is {L.shape}, positions are {x.shape}")
    return float(-0.5 * np.sum(x * (L @ x)))


def dirichlet_gradient(L: sparse.spmatrix, positions: np.ndarray) -> np.ndarray:
    """Gradient of :func:`dirichlet_energy` with respect to positions: ``(-L) x``."""
    x = np.asarray(positions, dtype=np.float64)
    if L.shape[0] != x.shape[0]:
        raise DimensionMismatchError(f"L is {L.shape}, positions are {x.shape}")
    return -(L @ x)


def dump_matrix(A: sparse.spmatrix, path) -> None:
    """Debug dump in coordinate `i j value` text form."""
    coo = A.tocoo()
    with open(path, "w") as f:
        f.write(f"# {A.shape[0]} {A.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{i} {j} {v:.17g}\n")
