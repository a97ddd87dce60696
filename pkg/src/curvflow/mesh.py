"""Triangle-mesh representation, validation, and topology queries.

The mesh is an indexed face set: connectivity is static over a flow, only
vertex positions evolve, so adjacency is computed once into
:class:`MeshTopology` instead of maintaining a half-edge structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import EmptyMeshError, TopologyError

# Triangles with area below this fraction of the mean area are rejected at
# validation time; degeneracy arising *during* a flow is the flow engine's
# business, not the mesh's.
DEGENERACY_RATIO = 1e-12


class TriMesh:
    """An oriented manifold triangle mesh.

    Parameters
    ----------
    vertices : array_like of shape (n, 3)
        Vertex positions in model units.
    faces : array_like of shape (m, 3)
        Vertex-index triples, counter-clockwise when viewed from outside.
    validate : bool
        Run full connectivity and geometry validation. Internal callers
        that only replace positions on known-good connectivity skip it.

    Notes
    -----
    Instances are immutable after construction (the arrays are marked
    read-only) and safe to share across threads.
    """

    def __init__(self, vertices, faces, validate: bool = True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise TopologyError("vertices must have shape (n, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise TopologyError("faces must have shape (m, 3)")
        if validate:
            _validate(self)
        self._boundary_mask = _boundary_vertex_mask(self.faces, self.n_vertices)
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self._boundary_mask.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def boundary_mask(self) -> np.ndarray:
        """Boolean mask of vertices that lie on a boundary edge."""
        return self._boundary_mask

    @property
    def is_closed(self) -> bool:
        return not bool(self._boundary_mask.any())

    def with_positions(self, positions) -> "TriMesh":
        """Same connectivity, new vertex positions, no geometric re-validation."""
        positions = np.asarray(positions, dtype=np.float64)
        if positions.shape != self.vertices.shape:
            raise TopologyError(
                f"positions shape {positions.shape} != {self.vertices.shape}"
            )
        return TriMesh(positions, self.faces, validate=False)

    def bounding_box_diagonal(self) -> float:
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(span))

    def __repr__(self):
        return f"TriMesh(V={self.n_vertices}, F={self.n_faces})"


@dataclass(frozen=True)
class MeshTopology:
    """Static adjacency and topological invariants of a validated mesh.

    ``edges`` lists each undirected edge once with ``i < j``;
    ``edge_faces`` gives the one or two incident triangle indices
    (-1 in the second slot for boundary edges).
    """

    neighbors: tuple
    edges: np.ndarray
    edge_faces: np.ndarray
    n_vertices: int
    n_edges: int
    n_faces: int
    euler_characteristic: int
    genus: int | None
    boundary_loop_count: int
    n_components: int
    boundary_mask: np.ndarray


def triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Per-triangle areas, half the cross-product norm. Zero-area is allowed."""
    p0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - p0
    e2 = vertices[faces[:, 2]] - p0
    cr = np.cross(e1, e2)
    return 0.5 * np.sqrt(np.einsum("ij,ij->i", cr, cr))


def surface_area(mesh: TriMesh, positions: np.ndarray | None = None) -> float:
    """Total surface area; optionally of the mesh under replacement positions."""
    pos = mesh.vertices if positions is None else np.asarray(positions, dtype=np.float64)
    return float(triangle_areas(pos, mesh.faces).sum())


def analyze_topology(mesh: TriMesh) -> MeshTopology:
    """Compute adjacency, Euler characteristic, genus, and boundary loops.

    Genus is reported only for closed connected meshes; open or
    disconnected meshes get ``genus=None``.
    """
    faces = mesh.faces
    nv = mesh.n_vertices
    edges, edge_faces = _edge_table(faces)
    ne = edges.shape[0]
    nf = faces.shape[0]
    chi = nv - ne + nf

    adj = sparse.coo_matrix(
        (np.ones(2 * ne, dtype=np.int8),
         (np.concatenate([edges[:, 0], edges[:, 1]]),
          np.concatenate([edges[:, 1], edges[:, 0]]))),
        shape=(nv, nv),
    ).tocsr()
    neighbors = tuple(
        np.sort(adj.indices[adj.indptr[i]:adj.indptr[i + 1]]) for i in range(nv)
    )

    n_components = connected_components(adj, directed=False, return_labels=False)

    boundary_edges = edges[edge_faces[:, 1] < 0]
    n_loops = _count_boundary_loops(boundary_edges, nv)

    genus = None
    if boundary_edges.shape[0] == 0 and n_components == 1:
        genus = (2 - chi) // 2

    return MeshTopology(
        neighbors=neighbors,
        edges=edges,
        edge_faces=edge_faces,
        n_vertices=nv,
        n_edges=ne,
        n_faces=nf,
        euler_characteristic=chi,
        genus=genus,
        boundary_loop_count=n_loops,
        n_components=n_components,
        boundary_mask=mesh.boundary_mask,
    )


def _directed_edges(faces: np.ndarray) -> np.ndarray:
    return np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])


def _edge_table(faces: np.ndarray):
    """Undirected edge list (i < j) with incident face indices."""
    de = _directed_edges(faces)
    face_of = np.tile(np.arange(faces.shape[0]), 3)
    und = np.sort(de, axis=1)
    order = np.lexsort((und[:, 1], und[:, 0]))
    und = und[order]
    face_of = face_of[order]
    is_new = np.ones(und.shape[0], dtype=bool)
    is_new[1:] = np.any(und[1:] != und[:-1], axis=1)
    edge_id = np.cumsum(is_new) - 1
    ne = int(edge_id[-1]) + 1 if und.shape[0] else 0
    edges = und[is_new]
    edge_faces = np.full((ne, 2), -1, dtype=np.int64)
    first = np.flatnonzero(is_new)
    edge_faces[:, 0] = face_of[first]
    second = np.flatnonzero(~is_new)
    edge_faces[edge_id[second], 1] = face_of[second]
    return edges, edge_faces


def _boundary_vertex_mask(faces: np.ndarray, nv: int) -> np.ndarray:
    mask = np.zeros(nv, dtype=bool)
    if faces.shape[0] == 0:
        return mask
    edges, edge_faces = _edge_table(faces)
    boundary = edges[edge_faces[:, 1] < 0]
    mask[boundary.ravel()] = True
    return mask


def _count_boundary_loops(boundary_edges: np.ndarray, nv: int) -> int:
    if boundary_edges.shape[0] == 0:
        return 0
    g = sparse.coo_matrix(
        (np.ones(boundary_edges.shape[0], dtype=np.int8),
         (boundary_edges[:, 0], boundary_edges[:, 1])),
        shape=(nv, nv),
    )
    n, labels = connected_components(g, directed=False, return_labels=True)
    touched = np.zeros(nv, dtype=bool)
    touched[boundary_edges.ravel()] = True
    return int(np.unique(labels[touched]).size)


def _validate(mesh: TriMesh) -> None:
    verts, faces = mesh.vertices, mesh.faces
    if verts.shape[0] == 0 or faces.shape[0] == 0:
        raise EmptyMeshError("mesh has no vertices or no faces")
    if not np.isfinite(verts).all():
        raise TopologyError("non-finite vertex coordinate")
    if faces.min() < 0 or faces.max() >= verts.shape[0]:
        raise TopologyError("face index out of range")
    if (
        (faces[:, 0] == faces[:, 1])
        | (faces[:, 1] == faces[:, 2])
        | (faces[:, 2] == faces[:, 0])
    ).any():
        raise TopologyError("face repeats a vertex")

    used = np.zeros(verts.shape[0], dtype=bool)
    used[faces.ravel()] = True
    if not used.all():
        raise TopologyError(f"{int((~used).sum())} isolated vertices")

    # Directed edges must be unique: a duplicate means two faces traverse an
    # edge the same way, i.e. inconsistent orientation (or a repeated face).
    de = _directed_edges(faces)
    key = de[:, 0] * verts.shape[0] + de[:, 1]
    uniq, counts = np.unique(key, return_counts=True)
    if (counts > 1).any():
        i, j = divmod(int(uniq[np.argmax(counts > 1)]), verts.shape[0])
        raise TopologyError(f"inconsistent orientation at directed edge ({i}, {j})")

    # Undirected edges in at most two faces.
    und = np.sort(de, axis=1)
    ukey = und[:, 0] * verts.shape[0] + und[:, 1]
    uniq, counts = np.unique(ukey, return_counts=True)
    if (counts > 2).any():
        i, j = divmod(int(uniq[np.argmax(counts > 2)]), verts.shape[0])
        raise TopologyError(f"non-manifold edge ({i}, {j}) shared by >2 faces")

    areas = triangle_areas(verts, faces)
    mean_area = areas.mean()
    if mean_area <= 0.0:
        raise TopologyError("all triangles degenerate")
    bad = areas < DEGENERACY_RATIO * mean_area
    if bad.any():
        raise TopologyError(
            f"degenerate input triangle {int(np.argmax(bad))} "
            f"(area {areas[bad].min():.3e} vs mean {mean_area:.3e})"
        )
