"""Mesh file I/O: OBJ, OFF, and PLY (ASCII and binary little-endian).

Only positions and connectivity survive a round trip; colors, normals,
and texture attributes are dropped on read. ASCII writers emit 17
significant digits so float64 coordinates round-trip exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .mesh import TriMesh

FORMATS = ("obj", "off", "ply")

_PLY_SCALAR = {
    "char": "b", "int8": "b",
    "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h",
    "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i",
    "uint": "I", "uint32": "I",
    "float": "f", "float32": "f",
    "double": "d", "float64": "d",
}


def _infer_format(path, fmt: str | None) -> str:
    if fmt is None:
        fmt = Path(path).suffix.lstrip(".").lower()
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise ParseError(f"unsupported mesh format {fmt!r} (expected one of {FORMATS})")
    return fmt


def load_mesh(path, fmt: str | None = None) -> TriMesh:
    """Load and validate a triangle mesh; polygonal faces are fan-triangulated."""
    fmt = _infer_format(path, fmt)
    if fmt == "obj":
        verts, polys = _read_obj(path)
    elif fmt == "off":
        verts, polys = _read_off(path)
    else:
        verts, polys = _read_ply(path)
    faces = _fan_triangulate(polys)
    return TriMesh(verts, faces)


def save_mesh(mesh: TriMesh, path, fmt: str | None = None, binary: bool = False) -> None:
    """Write a mesh; ``binary`` applies to PLY only."""
    fmt = _infer_format(path, fmt)
    if fmt == "obj":
        _write_obj(mesh, path)
    elif fmt == "off":
        _write_off(mesh, path)
    else:
        _write_ply(mesh, path, binary=binary)


def _fan_triangulate(polys) -> np.ndarray:
    tris = []
    for poly in polys:
        if len(poly) < 3:
            raise ParseError(f"face with {len(poly)} vertices")
        for k in range(1, len(poly) - 1):
            tris.append((poly[0], poly[k], poly[k + 1]))
    return np.array(tris, dtype=np.int64).reshape(-1, 3)


# ---------------------------------------------------------------- OBJ

def _read_obj(path):
    verts, polys = [], []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ParseError(f"{path}:{lineno}: short vertex line")
                try:
                    verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError as e:
                    raise ParseError(f"{path}:{lineno}: {e}") from e
            elif tag == "f":
                poly = []
                for tok in parts[1:]:
                    try:
                        idx = int(tok.split("/")[0])
                    except ValueError as e:
                        raise ParseError(f"{path}:{lineno}: bad face index {tok!r}") from e
                    if idx < 0:           # OBJ relative indexing
                        idx = len(verts) + idx
                    else:
                        idx -= 1
                    poly.append(idx)
                polys.append(poly)
    return np.array(verts, dtype=np.float64).reshape(-1, 3), polys


def _write_obj(mesh: TriMesh, path):
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.faces:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


# ---------------------------------------------------------------- OFF

def _off_tokens(path):
    with open(path, "r") as f:
        for line in f:
            line = line.split("#", 1)[0]
            for tok in line.split():
                yield tok


def _read_off(path):
    toks = _off_tokens(path)
    try:
        header = next(toks)
    except StopIteration:
        raise ParseError(f"{path}: empty OFF file") from None
    if header.startswith("OFF"):
        header = header[3:]          # counts may share the header line
        rest = [header] if header else []
    else:
        raise ParseError(f"{path}: missing OFF header")

    def take(n):
        out = list(rest[:n])
        del rest[: len(out)]
        while len(out) < n:
            try:
                out.append(next(toks))
            except StopIteration:
                raise ParseError(f"{path}: truncated OFF file") from None
        return out

    try:
        nv, nf, _ne = (int(x) for x in take(3))
        verts = np.array([float(x) for x in take(3 * nv)], dtype=np.float64)
        polys = []
        for _ in range(nf):
            k = int(take(1)[0])
            polys.append([int(x) for x in take(k)])
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from e
    return verts.reshape(-1, 3), polys


def _write_off(mesh: TriMesh, path):
    with open(path, "w") as f:
        f.write("OFF\n")
        f.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
        for v in mesh.vertices:
            f.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.faces:
            f.write(f"3 {t[0]} {t[1]} {t[2]}\n")


# ---------------------------------------------------------------- PLY

def _read_ply(path):
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"ply":
            raise ParseError(f"{path}: missing ply magic")
        fmt = None
        elements = []       # (name, count, [(prop_kind, ...)])
        while True:
            line = f.readline()
            if not line:
                raise ParseError(f"{path}: truncated PLY header")
            parts = line.decode("ascii", "replace").split()
            if not parts or parts[0] == "comment":
                continue
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if not elements:
                    raise ParseError(f"{path}: property before element")
                if parts[1] == "list":
                    elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
                else:
                    elements[-1][2].append(("scalar", parts[1], parts[2]))
            elif parts[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise ParseError(f"{path}: unsupported PLY format {fmt!r}")
        if fmt == "ascii":
            return _read_ply_body_ascii(f, elements, path)
        return _read_ply_body_binary(f, elements, path)


def _vertex_xyz_slots(props, path):
    names = [p[2] for p in props if p[0] == "scalar"]
    if any(p[0] != "scalar" for p in props):
        raise ParseError(f"{path}: list property on vertex element")
    try:
        return [names.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise ParseError(f"{path}: vertex element lacks x/y/z") from None


def _read_ply_body_ascii(f, elements, path):
    toks = iter(f.read().decode("ascii").split())

    def take():
        try:
            return next(toks)
        except StopIteration:
            raise ParseError(f"{path}: truncated PLY body") from None

    verts, polys = None, None
    for name, count, props in elements:
        if name == "vertex":
            slots = _vertex_xyz_slots(props, path)
            data = np.empty((count, 3))
            width = len(props)
            for i in range(count):
                row = [take() for _ in range(width)]
                data[i] = [float(row[s]) for s in slots]
            verts = data
        elif name == "face":
            polys = []
            for _ in range(count):
                for kind, *_rest in props:
                    k = int(take())
                    if kind != "list":
                        raise ParseError(f"{path}: face element without list property")
                    polys.append([int(take()) for _ in range(k)])
        else:
            for _ in range(count):
                for kind, *rest in props:
                    if kind == "scalar":
                        take()
                    else:
                        k = int(take())
                        for _ in range(k):
                            take()
    if verts is None or polys is None:
        raise ParseError(f"{path}: PLY lacks vertex or face element")
    return verts, polys


def _read_ply_body_binary(f, elements, path):
    def read_scalar(code):
        size = struct.calcsize("<" + code)
        buf = f.read(size)
        if len(buf) != size:
            raise ParseError(f"{path}: truncated PLY body")
        return struct.unpack("<" + code, buf)[0]

    verts, polys = None, None
    for name, count, props in elements:
        if name == "vertex":
            slots = _vertex_xyz_slots(props, path)
            codes = [_PLY_SCALAR[p[1]] for p in props]
            rowfmt = "<" + "".join(codes)
            rowsize = struct.calcsize(rowfmt)
            raw = f.read(rowsize * count)
            if len(raw) != rowsize * count:
                raise ParseError(f"{path}: truncated PLY vertex data")
            rows = list(struct.iter_unpack(rowfmt, raw))
            data = np.array(rows, dtype=np.float64)
            verts = data[:, slots]
        elif name == "face":
            if len(props) != 1 or props[0][0] != "list":
                raise ParseError(f"{path}: face element must be a single list property")
            _, count_t, idx_t, _name = props[0]
            polys = []
            for _ in range(count):
                k = int(read_scalar(_PLY_SCALAR[count_t]))
                idxfmt = "<" + _PLY_SCALAR[idx_t] * k
                buf = f.read(struct.calcsize(idxfmt))
                if len(buf) != struct.calcsize(idxfmt):
                    raise ParseError(f"{path}: truncated PLY face data")
                polys.append(list(struct.unpack(idxfmt, buf)))
        else:
            for _ in range(count):
                for kind, *rest in props:
                    if kind == "scalar":
                        read_scalar(_PLY_SCALAR[rest[0]])
                    else:
                        k = int(read_scalar(_PLY_SCALAR[rest[0]]))
                        f.read(struct.calcsize("<" + _PLY_SCALAR[rest[1]] * k))
    if verts is None or polys is None:
        raise ParseError(f"{path}: PLY lacks vertex or face element")
    return verts, polys


def _write_ply(mesh: TriMesh, path, binary: bool):
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property double x\n"
        "property double y\n"
        "property double z\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    if binary:
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(mesh.vertices.astype("<f8").tobytes())
            face_rec = np.empty(
                mesh.n_faces,
                dtype=np.dtype([("n", "u1"), ("idx", "<i4", (3,))]),
            )
            face_rec["n"] = 3
            face_rec["idx"] = mesh.faces
            f.write(face_rec.tobytes())
    else:
        with open(path, "w") as f:
            f.write(header)
            for v in mesh.vertices:
                f.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
            for t in mesh.faces:
                f.write(f"3 {t[0]} {t[1]} {t[2]}\n")
