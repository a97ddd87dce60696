"""Parametric generators for the synthetic test surfaces.

All generators are deterministic (identical spec -> bit-identical mesh)
and produce validated, consistently oriented meshes. Rotational shapes
are swept about the z axis; the icosphere comes from icosahedron
subdivision (near-uniform triangles), not a UV sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import SpecError
from .mesh import TriMesh

KINDS = ("icosphere", "cylinder", "catenoid", "dumbbell", "revolution")


@dataclass(frozen=True)
class ShapeSpec:
    """Parameters for one generated surface; use the named constructors."""

    kind: str
    subdivisions: int = 3
    radius: float = 1.0
    height: float = 6.0
    n_theta: int = 64
    n_z: int = 33
    caps: bool = True
    n_rings: int = 100
    neck_radius: float = 0.2
    bulb_radius: float = 1.0
    bulb_center: float = 1.5
    neck_join: float = 0.8
    profile: tuple = ()  # ((z, r), ...) pairs for kind="revolution"

    @staticmethod
    def icosphere(subdivisions: int = 3, radius: float = 1.0) -> "ShapeSpec":
        return ShapeSpec(kind="icosphere", subdivisions=subdivisions, radius=radius)

    @staticmethod
    def cylinder(
        radius: float = 1.0,
        height: float = 6.0,
        n_theta: int = 80,
        n_z: int = 60,
        caps: bool = True,
    ) -> "ShapeSpec":
        return ShapeSpec(
            kind="cylinder", radius=radius, height=height,
            n_theta=n_theta, n_z=n_z, caps=caps,
        )

    @staticmethod
    def catenoid(n_theta: int = 96, n_z: int = 49) -> "ShapeSpec":
        return ShapeSpec(kind="catenoid", n_theta=n_theta, n_z=n_z)

    @staticmethod
    def dumbbell(
        n_theta: int = 100,
        n_rings: int = 100,
        neck_radius: float = 0.2,
        bulb_radius: float = 1.0,
        bulb_center: float = 1.5,
        neck_join: float = 0.8,
    ) -> "ShapeSpec":
        return ShapeSpec(
            kind="dumbbell", n_theta=n_theta, n_rings=n_rings,
            neck_radius=neck_radius, bulb_radius=bulb_radius,
            bulb_center=bulb_center, neck_join=neck_join,
        )

    @staticmethod
    def revolution(profile, n_theta: int = 64) -> "ShapeSpec":
        return ShapeSpec(
            kind="revolution", n_theta=n_theta,
            profile=tuple((float(z), float(r)) for z, r in profile),
        )

    def refined(self) -> "ShapeSpec":
        """The same shape at roughly half the mesh spacing (for convergence studies)."""
        if self.kind == "icosphere":
            return replace(self, subdivisions=self.subdivisions + 1)
        if self.kind == "dumbbell":
            return replace(self, n_theta=2 * self.n_theta, n_rings=2 * self.n_rings)
        if self.kind == "revolution":
            raise SpecError("cannot refine a sampled revolution profile")
        return replace(self, n_theta=2 * self.n_theta, n_z=2 * self.n_z - 1)


def parse_spec(text: str) -> ShapeSpec:
    """Parse an inline generator string such as ``icosphere:3``,
    ``cylinder:r=1,h=6,nt=64,nz=48,caps=1``, ``catenoid:nt=96,nz=49``,
    ``dumbbell:default``, or ``revolution:file=profile.txt``."""
    kind, _, args = text.partition(":")
    kind = kind.strip().lower()
    if kind not in KINDS:
        raise SpecError(f"unknown shape kind {kind!r} in {text!r}")
    args = args.strip()
    if kind == "icosphere":
        if args and "=" not in args:
            return ShapeSpec.icosphere(_parse_int(args, text))
        kv = _parse_kv(args, text)
        out = ShapeSpec.icosphere(int(kv.pop("subdiv", 3)), float(kv.pop("r", 1.0)))
        _no_extra(kv, text)
        return out
    if kind == "cylinder":
        kv = _parse_kv(args, text)
        out = ShapeSpec.cylinder(
            radius=float(kv.pop("r", 1.0)),
            height=float(kv.pop("h", 6.0)),
            n_theta=int(kv.pop("nt", 80)),
            n_z=int(kv.pop("nz", 60)),
            caps=bool(int(kv.pop("caps", 1))),
        )
        _no_extra(kv, text)
        return out
    if kind == "catenoid":
        kv = _parse_kv(args, text)
        out = ShapeSpec.catenoid(n_theta=int(kv.pop("nt", 96)), n_z=int(kv.pop("nz", 49)))
        _no_extra(kv, text)
        return out
    if kind == "dumbbell":
        if args in ("", "default"):
            return ShapeSpec.dumbbell()
        kv = _parse_kv(args, text)
        out = ShapeSpec.dumbbell(
            n_theta=int(kv.pop("nt", 100)),
            n_rings=int(kv.pop("nr", 100)),
            neck_radius=float(kv.pop("neck", 0.2)),
            bulb_radius=float(kv.pop("bulb", 1.0)),
            bulb_center=float(kv.pop("sep", 1.5)),
            neck_join=float(kv.pop("join", 0.8)),
        )
        _no_extra(kv, text)
        return out
    kv = _parse_kv(args, text)
    path = kv.pop("file", None)
    if path is None:
        raise SpecError("revolution needs file=PATH with 'z r' sample lines")
    samples = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if parts and not parts[0].startswith("#"):
                samples.append((float(parts[0]), float(parts[1])))
    out = ShapeSpec.revolution(samples, n_theta=int(kv.pop("nt", 64)))
    _no_extra(kv, text)
    return out


def _parse_int(tok: str, ctx: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise SpecError(f"bad integer {tok!r} in {ctx!r}") from None


def _parse_kv(args: str, ctx: str) -> dict:
    kv = {}
    if not args:
        return kv
    for item in args.split(","):
        key, eq, val = item.partition("=")
        if not eq:
            raise SpecError(f"expected key=value, got {item!r} in {ctx!r}")
        kv[key.strip()] = val.strip()
    return kv


def _no_extra(kv: dict, ctx: str) -> None:
    if kv:
        raise SpecError(f"unknown parameter(s) {sorted(kv)} in {ctx!r}")


def spec_to_string(spec: ShapeSpec) -> str:
    """Inverse of :func:`parse_spec` for manifests (revolution excepted)."""
    if spec.kind == "icosphere":
        return f"icosphere:subdiv={spec.subdivisions},r={spec.radius:g}"
    if spec.kind == "cylinder":
        return (
            f"cylinder:r={spec.radius:g},h={spec.height:g},"
            f"nt={spec.n_theta},nz={spec.n_z},caps={int(spec.caps)}"
        )
    if spec.kind == "catenoid":
        return f"catenoid:nt={spec.n_theta},nz={spec.n_z}"
    if spec.kind == "dumbbell":
        return (
            f"dumbbell:nt={spec.n_theta},nr={spec.n_rings},"
            f"neck={spec.neck_radius:g},bulb={spec.bulb_radius:g},"
            f"sep={spec.bulb_center:g},join={spec.neck_join:g}"
        )
    return f"revolution:nt={spec.n_theta}"


def generate(spec: ShapeSpec) -> TriMesh:
    """Build the mesh described by ``spec``; raises SpecError on bad parameters."""
    _validate_spec(spec)
    if spec.kind == "icosphere":
        verts, faces = _icosphere(spec.subdivisions, spec.radius)
        return TriMesh(verts, faces)
    pr, pz = _profile(spec)
    verts, faces = _revolve(pr, pz, spec.n_theta)
    return TriMesh(verts, faces)


def mid_ring_radius(mesh: TriMesh, spec: ShapeSpec) -> float:
    """Measured radius of the shape: mean distance to the barycenter for the
    icosphere, mean distance-to-axis of the ring nearest the axial midpoint
    for swept shapes. Works on flowed copies sharing the generator layout."""
    return ring_radius(spec, mesh.vertices)


def ring_radius(spec: ShapeSpec, positions: np.ndarray) -> float:
    _validate_spec(spec)
    positions = np.asarray(positions, dtype=np.float64)
    if spec.kind == "icosphere":
        center = positions.mean(axis=0)
        return float(np.linalg.norm(positions - center, axis=1).mean())
    idx = mid_ring_vertices(spec)
    ring = positions[idx]
    axis_xy = positions.mean(axis=0)[:2]
    return float(np.linalg.norm(ring[:, :2] - axis_xy, axis=1).mean())


def mid_ring_vertices(spec: ShapeSpec) -> np.ndarray:
    """Vertex indices of the ring nearest the axial midpoint (generator layout)."""
    if spec.kind == "icosphere":
        raise SpecError("icosphere has no ring structure")
    pr, pz = _profile(spec)
    has_start_pole = pr[0] == 0.0
    ring_r = pr[pr > 0.0]
    ring_z = pz[pr > 0.0]
    z_mid = 0.5 * (pz.min() + pz.max())
    # break distance ties toward the fatter ring (caps sit at extreme z anyway)
    k = int(np.lexsort((-ring_r, np.abs(ring_z - z_mid)))[0])
    start = (1 if has_start_pole else 0) + k * spec.n_theta
    return np.arange(start, start + spec.n_theta)


def _validate_spec(spec: ShapeSpec) -> None:
    if spec.kind not in KINDS:
        raise SpecError(f"unknown shape kind {spec.kind!r}")
    if spec.kind == "icosphere":
        if spec.subdivisions < 0:
            raise SpecError("subdivision level must be >= 0")
        if spec.radius <= 0:
            raise SpecError("radius must be positive")
        return
    if spec.n_theta < 3:
        raise SpecError("angular sample count must be >= 3")
    if spec.kind in ("cylinder", "catenoid") and spec.n_z < 2:
        raise SpecError("axial sample count must be >= 2")
    if spec.kind == "cylinder" and (spec.radius <= 0 or spec.height <= 0):
        raise SpecError("cylinder radius and height must be positive")
    if spec.kind == "dumbbell":
        if spec.n_rings < 3:
            raise SpecError("dumbbell needs at least 3 rings")
        if not (0 < spec.neck_radius < spec.bulb_radius):
            raise SpecError("neck radius must be in (0, bulb radius)")
        if spec.bulb_center <= spec.bulb_radius:
            raise SpecError("bulbs must not engulf the neck (center > radius)")
        if not (spec.bulb_center - spec.bulb_radius < spec.neck_join < spec.bulb_center):
            raise SpecError("neck join must fall on the inner bulb shoulder")
        zj = spec.neck_join
        alpha, beta = _dumbbell_blend(spec)
        zs = np.linspace(0.0, zj, 257)
        if np.any(spec.neck_radius + alpha * zs**2 + beta * zs**4 <= 0.0):
            raise SpecError("dumbbell profile not strictly positive")
    if spec.kind == "revolution":
        if len(spec.profile) < 2:
            raise SpecError("revolution profile needs at least 2 samples")
        rr = np.array([r for _, r in spec.profile])
        if np.any(rr < 0.0) or np.any(rr[1:-1] <= 0.0):
            raise SpecError("revolution profile must be positive away from the ends")


# ------------------------------------------------------------- icosphere

_GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0

_ICO_VERTS = np.array([
    (-1, _GOLDEN, 0), (1, _GOLDEN, 0), (-1, -_GOLDEN, 0), (1, -_GOLDEN, 0),
    (0, -1, _GOLDEN), (0, 1, _GOLDEN), (0, -1, -_GOLDEN), (0, 1, -_GOLDEN),
    (_GOLDEN, 0, -1), (_GOLDEN, 0, 1), (-_GOLDEN, 0, -1), (-_GOLDEN, 0, 1),
], dtype=np.float64)

_ICO_FACES = np.array([
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
], dtype=np.int64)


def _icosphere(subdivisions: int, radius: float):
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = _ICO_FACES
    for _ in range(subdivisions):
        midpoint: dict = {}
        new_faces = []

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            idx = midpoint.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                verts.append(m)
                idx = len(verts) - 1
                midpoint[key] = idx
            return idx

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new_faces, dtype=np.int64)
    return radius * np.array(verts), faces


# ------------------------------------------------------- swept profiles

def _dumbbell_blend(spec: ShapeSpec):
    """Coefficients of the even quartic neck r = a + alpha z^2 + beta z^4
    matching the bulb profile's value and slope at the join."""
    zj, a, R, c = spec.neck_join, spec.neck_radius, spec.bulb_radius, spec.bulb_center
    rho = np.sqrt(R * R - (zj - c) ** 2)
    drho = (c - zj) / rho
    m = np.array([[zj**2, zj**4], [2 * zj, 4 * zj**3]])
    alpha, beta = np.linalg.solve(m, np.array([rho - a, drho]))
    return float(alpha), float(beta)


def _dumbbell_profile_fn(spec: ShapeSpec):
    zj, a, R, c = spec.neck_join, spec.neck_radius, spec.bulb_radius, spec.bulb_center
    alpha, beta = _dumbbell_blend(spec)

    def r_of_z(z):
        z = np.abs(np.asarray(z, dtype=np.float64))
        bulb = np.sqrt(np.maximum(R * R - (z - c) ** 2, 0.0))
        neck = a + alpha * z**2 + beta * z**4
        return np.where(z >= zj, bulb, neck)

    return r_of_z, c + R


def _profile(spec: ShapeSpec):
    """Profile polyline (r_i, z_i), traversed bottom to top, poles as r=0 ends."""
    if spec.kind == "cylinder":
        r, h = spec.radius, spec.height
        z = np.linspace(-h / 2, h / 2, spec.n_z)
        if not spec.caps:
            return np.full(spec.n_z, r), z
        m = max(1, round(r / (h / (spec.n_z - 1))))
        cap_r = r * np.arange(m + 1) / (m + 1)  # 0 .. r exclusive of rim
        pr = np.concatenate([cap_r, np.full(spec.n_z, r), cap_r[::-1]])
        pz = np.concatenate([np.full(m + 1, -h / 2), z, np.full(m + 1, h / 2)])
        return pr, pz
    if spec.kind == "catenoid":
        z = np.linspace(-1.0, 1.0, spec.n_z)
        return np.cosh(z), z
    if spec.kind == "dumbbell":
        r_of_z, z_end = _dumbbell_profile_fn(spec)
        dense_z = np.linspace(-z_end, z_end, 4097)
        dense_r = r_of_z(dense_z)
        seg = np.hypot(np.diff(dense_z), np.diff(dense_r))
        s = np.concatenate([[0.0], np.cumsum(seg)])
        targets = s[-1] * np.arange(1, spec.n_rings + 1) / (spec.n_rings + 1)
        ring_z = np.interp(targets, s, dense_z)
        pr = np.concatenate([[0.0], r_of_z(ring_z), [0.0]])
        pz = np.concatenate([[-z_end], ring_z, [z_end]])
        return pr, pz
    # generic revolution
    pz = np.array([z for z, _ in spec.profile])
    pr = np.array([r for _, r in spec.profile])
    return pr, pz


def _revolve(pr: np.ndarray, pz: np.ndarray, n_theta: int):
    """Sweep a profile polyline around z; r=0 at an end closes with a pole."""
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    verts = []
    ring_start = []
    start_pole = end_pole = None
    for i, (r, z) in enumerate(zip(pr, pz)):
        if r == 0.0:
            if i == 0:
                start_pole = len(verts)
                verts.append((0.0, 0.0, z))
            elif i == len(pr) - 1:
                end_pole = len(verts)
                verts.append((0.0, 0.0, z))
            else:
                raise SpecError("profile radius vanishes away from the ends")
            ring_start.append(None)
        else:
            ring_start.append(len(verts))
            verts.extend(zip(r * cos_t, r * sin_t, np.full(n_theta, z)))

    faces = []
    k1 = np.arange(n_theta)
    k2 = (k1 + 1) % n_theta
    for i in range(len(pr) - 1):
        a, b = ring_start[i], ring_start[i + 1]
        if a is None and b is None:
            raise SpecError("two consecutive profile poles")
        if a is None:  # start pole fan, oriented outward (downward cap)
            faces.extend(zip(np.full(n_theta, start_pole), b + k2, b + k1))
        elif b is None:  # end pole fan
            faces.extend(zip(np.full(n_theta, end_pole), a + k1, a + k2))
        else:
            faces.extend(zip(a + k1, a + k2, b + k2))
            faces.extend(zip(a + k1, b + k2, b + k1))
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)
