"""Per-step flow measurements: stretch spectra, conformality, sphericity,
convergence deltas, and the Dirichlet energy decomposition.

The stretch spectrum holds, per triangle, the singular values
(lam1 >= lam2 >= 0) of the 2x2 linear map taking the rest triangle
(flattened isometrically into its plane) to the current one. This is
exact for piecewise-linear maps and needs no 3x3 SVD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DegenerateTriangleError, DimensionMismatchError
from .mesh import TriMesh, triangle_areas

CSV_COLUMNS = (
    "step", "flow_time", "area", "convergence_delta", "qc_error",
    "sphericity_variance", "dirichlet_energy", "tildeEA", "tildeEC",
    "min_tri_area_ratio", "status",
)


@dataclass(frozen=True)
class StretchSpectrum:
    """Per-triangle singular values of the rest-to-current map."""

    lam1: np.ndarray
    lam2: np.ndarray
    rest_areas: np.ndarray
    degenerate: np.ndarray  # current triangles with (numerically) zero area

    @property
    def any_degenerate(self) -> bool:
        return bool(self.degenerate.any())


@dataclass
class MetricRecord:
    """One per-step measurement row; serializes to the fixed CSV schema."""

    step: int
    flow_time: float
    area: float
    convergence_delta: float
    qc_error: float
    sphericity_variance: float
    dirichlet_energy: float
    area_energy_tilde: float
    conformal_energy_tilde: float
    min_tri_area_ratio: float
    status: str
    dirichlet_energy_normalized: float = math.nan  # unit-area rescaled map; not in CSV

    def to_csv_row(self) -> str:
        vals = (
            str(self.step),
            f"{self.flow_time:.17g}",
            f"{self.area:.17g}",
            f"{self.convergence_delta:.17g}",
            f"{self.qc_error:.17g}",
            f"{self.sphericity_variance:.17g}",
            f"{self.dirichlet_energy:.17g}",
            f"{self.area_energy_tilde:.17g}",
            f"{self.conformal_energy_tilde:.17g}",
            f"{self.min_tri_area_ratio:.17g}",
            self.status,
        )
        return ",".join(vals)


def _flatten_2x2(positions: np.ndarray, faces: np.ndarray):
    """Each triangle isometrically flattened to [[x1, x2], [0, y2]] with the
    first edge along the local x axis; y2 >= 0 is twice area over x1."""
    p0 = positions[faces[:, 0]]
    e1 = positions[faces[:, 1]] - p0
    e2 = positions[faces[:, 2]] - p0
    x1 = np.linalg.norm(e1, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = e1 / x1[:, None]
    x2 = np.einsum("ij,ij->i", u, e2)
    cr = np.cross(e1, e2)
    with np.errstate(invalid="ignore", divide="ignore"):
        y2 = np.sqrt(np.einsum("ij,ij->i", cr, cr)) / x1
    return x1, x2, y2


def stretch_spectrum(rest: TriMesh, current_positions: np.ndarray) -> StretchSpectrum:
    """Singular values of the per-triangle rest-to-current linear map.

    A current triangle of zero area is reported with ``lam2 = 0`` and
    flagged, not thrown: the flow needs to observe collapse.
    """
    cur = np.asarray(current_positions, dtype=np.float64)
    if cur.shape != rest.vertices.shape:
        raise DimensionMismatchError(
            f"current positions {cur.shape} != rest {rest.vertices.shape}"
        )
    faces = rest.faces
    x1, x2, y2 = _flatten_2x2(rest.vertices, faces)
    if np.any(~np.isfinite(y2)) or np.any(y2 <= 0.0):
        raise DegenerateTriangleError("rest mesh has a degenerate triangle")
    X1, X2, Y2 = _flatten_2x2(cur, faces)
    X1 = np.nan_to_num(X1)
    X2 = np.nan_to_num(X2)
    Y2 = np.nan_to_num(Y2)
    # J = Q P^{-1} is upper triangular when both frames ride the first edge
    a = X1 / x1
    b = (X2 - a * x2) / y2
    d = Y2 / y2
    e, f = 0.5 * (a + d), 0.5 * (a - d)
    g = h = 0.5 * b
    q1 = np.sqrt(e * e + h * h)
    q2 = np.sqrt(f * f + g * g)
    lam1 = q1 + q2
    lam2 = np.abs(q1 - q2)
    rest_areas = 0.5 * x1 * y2
    cur_areas = triangle_areas(cur, faces)
    degenerate = cur_areas <= 0.0
    return StretchSpectrum(lam1=lam1, lam2=lam2, rest_areas=rest_areas, degenerate=degenerate)


def qc_error(spectrum: StretchSpectrum) -> float:
    """Rest-area-weighted mean of lam1/lam2; 1 exactly for conformal maps,
    +inf once any triangle has collapsed."""
    if spectrum.any_degenerate:
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = spectrum.lam1 / spectrum.lam2
    if not np.isfinite(ratios).all():
        return math.inf
    return float(np.sum(spectrum.rest_areas * ratios) / np.sum(spectrum.rest_areas))


def sphericity_variance(positions: np.ndarray, weights: np.ndarray) -> float:
    """Mass-weighted variance of vertex distances to the mass-weighted barycenter."""
    pos = np.asarray(positions, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape[0] != pos.shape[0]:
        raise DimensionMismatchError("weights length != vertex count")
    total = w.sum()
    bary = (w[:, None] * pos).sum(axis=0) / total
    r = np.linalg.norm(pos - bary, axis=1)
    r_mean = float((w * r).sum() / total)
    return float((w * (r - r_mean) ** 2).sum() / total)


def vertex_masses(D: sparse.spmatrix) -> np.ndarray:
    """Per-vertex masses by diagonal lumping (row sums) of the mass matrix."""
    return np.asarray(D.sum(axis=1)).ravel()


def convergence_delta(prev: np.ndarray, nxt: np.ndarray, mass: sparse.spmatrix) -> float:
    """Mass-weighted L2 norm of the displacement, summed over coordinates."""
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if prev.shape != nxt.shape or prev.shape[0] != mass.shape[0]:
        raise DimensionMismatchError("positions/mass dimensions disagree")
    d = nxt - prev
    return float(np.sqrt(np.sum(d * (mass @ d))))


def energy_decomposition(rest: TriMesh, current_positions: np.ndarray):
    """Split the Dirichlet energy into the modified area and conformal parts.

    Per triangle, with ``d = (lam1*lam2)^2`` and ``T = lam1^2 + lam2^2``:
    the area part integrates ``2d/T``, the conformal part
    ``(T^2 - 4d)/(2T)``, and their sum ``T/2`` is the Dirichlet energy of
    the piecewise-linear map. Returns ``(E_area, E_conformal, E_total)``.
    """
    spectrum = stretch_spectrum(rest, current_positions)
    return energy_decomposition_from_spectrum(spectrum)


def energy_decomposition_from_spectrum(spectrum: StretchSpectrum):
    l1sq = spectrum.lam1**2
    l2sq = spectrum.lam2**2
    d = l1sq * l2sq
    t = l1sq + l2sq
    if np.any(t <= 0.0):
        raise DegenerateTriangleError(
            f"triangle {int(np.argmax(t <= 0.0))} fully collapsed (both stretches zero)"
        )
    a0 = spectrum.rest_areas
    ea = float(np.sum(a0 * 2.0 * d / t))
    ec = float(np.sum(a0 * (t * t - 4.0 * d) / (2.0 * t)))
    total = float(np.sum(a0 * 0.5 * t))
    return ea, ec, total


def classical_energies(spectrum: StretchSpectrum):
    """Unmodified area and conformal energies with sqrt-determinant
    denominators. Diagnostics only: the conformal part diverges as
    triangles collapse (that divergence is the point), so values may be inf.
    """
    l1sq = spectrum.lam1**2
    l2sq = spectrum.lam2**2
    d = l1sq * l2sq
    t = l1sq + l2sq
    a0 = spectrum.rest_areas
    sq = np.sqrt(d)
    e_area = float(np.sum(a0 * sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = (t * t - 4.0 * d) / (4.0 * sq)
        integrand = np.where((t * t - 4.0 * d) == 0.0, 0.0, integrand)
    e_conf = float(np.sum(a0 * integrand))
    return e_area, e_conf
