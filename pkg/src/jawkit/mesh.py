"""Triangle meshes and PLY / STL / OBJ input-output."""

from __future__ import annotations

import hashlib
import os
import struct
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParseError, UnsupportedFormatError
from .se3 import RigidTransform, apply

FORMATS = ("ply", "stl", "obj")


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle surface. Coordinates in mm.

    Construction drops zero-area and repeated-index triangles with a warning.
    Arrays are read-only; derived quantities (normals, spatial index) are
    computed lazily and cached.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = ""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(v) < 3:
            raise ValueError("a mesh needs at least three vertices")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("triangle index out of range")
        keep = _nondegenerate(v, f)
        if not keep.all():
            warnings.warn(f"dropped {int((~keep).sum())} degenerate triangle(s)", stacklevel=3)
            f = f[keep]
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def mesh_id(self) -> str:
        """The name if given, else a content digest."""
        if self.name:
            return self.name
        h = hashlib.sha1(self.vertices.tobytes())
        h.update(self.triangles.tobytes())
        return h.hexdigest()[:12]

    @cached_property
    def face_normals(self) -> np.ndarray:
        tri = self.vertices[self.triangles]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals (unit length; zero for unused vertices)."""
        acc = np.zeros_like(self.vertices)
        w = self.face_normals * self.face_areas[:, None]
        for k in range(3):
            np.add.at(acc, self.triangles[:, k], w)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        return np.divide(acc, norm, out=np.zeros_like(acc), where=norm > 0)

    @cached_property
    def index(self):
        """Bounding-volume hierarchy over the triangles (built on first use)."""
        from .bvh import SpatialIndex
        return SpatialIndex(self)

    def transformed(self, t: RigidTransform, name: str | None = None) -> "TriangleMesh":
        return TriangleMesh(apply(t, self.vertices), self.triangles,
                            self.name if name is None else name)

    def flipped(self) -> "TriangleMesh":
        """Same surface with reversed winding (normals point the other way)."""
        return TriangleMesh(self.vertices, self.triangles[:, ::-1], self.name)

    def with_vertices(self, vertices, name: str | None = None) -> "TriangleMesh":
        return TriangleMesh(vertices, self.triangles, self.name if name is None else name)

    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two triangles."""
        e = np.sort(self.edges_directed(), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def edges_directed(self) -> np.ndarray:
        f = self.triangles
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])

    def has_consistent_orientation(self) -> bool:
        """No directed edge appears twice (adjacent triangles wind oppositely)."""
        _, counts = np.unique(self.edges_directed(), axis=0, return_counts=True)
        return bool(np.all(counts == 1))


def merge(meshes, name: str = "") -> TriangleMesh:
    verts, tris, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += m.n_vertices
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris), name)


def _nondegenerate(v, f, eps: float = 1e-12) -> np.ndarray:
    if len(f) == 0:
        return np.ones(0, dtype=bool)
    distinct = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    tri = v[f]
    area2 = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    return distinct & (area2 > eps)


# -- I/O ------------------------------------------------------------------------

def _format_of(path, fmt):
    if fmt is None:
        fmt = os.path.splitext(str(path))[1].lstrip(".")
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise UnsupportedFormatError(f"unsupported mesh format {fmt!r}")
    return fmt


def load_mesh(path, fmt: str | None = None, name: str | None = None) -> TriangleMesh:
    fmt = _format_of(path, fmt)
    with open(path, "rb") as fh:
        data = fh.read()
    if fmt == "ply":
        v, f, _ = read_ply_bytes(data)
    elif fmt == "stl":
        v, f = _read_stl(data)
    else:
        v, f = _read_obj(data)
    if name is None:
        name = os.path.splitext(os.path.basename(str(path)))[0]
    try:
        return TriangleMesh(v, f, name)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def save_mesh(mesh: TriangleMesh, path, fmt: str | None = None, binary: bool = True,
              vertex_properties: dict | None = None) -> None:
    fmt = _format_of(path, fmt)
    if fmt == "ply":
        data = ply_bytes(mesh.vertices, mesh.triangles, binary=binary,
                         vertex_properties=vertex_properties)
    elif fmt == "stl":
        data = _stl_bytes(mesh)
    else:
        data = _obj_bytes(mesh)
    with open(path, "wb") as fh:
        fh.write(data)


# PLY -------------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def ply_bytes(vertices, triangles, binary=True, vertex_properties=None) -> bytes:
    """Serialize to PLY. ``vertex_properties`` maps name -> (ply type, array)."""
    vertex_properties = vertex_properties or {}
    n, m = len(vertices), len(triangles)
    head = ["ply", "format binary_little_endian 1.0" if binary else "format ascii 1.0",
            f"element vertex {n}", "property double x", "property double y", "property double z"]
    for pname, (ptype, _) in vertex_properties.items():
        head.append(f"property {ptype} {pname}")
    head += [f"element face {m}", "property list uchar int vertex_indices", "end_header"]
    header = ("\n".join(head) + "\n").encode("ascii")
    if binary:
        fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
        fields += [(pn, "<" + _PLY_TYPES[pt]) for pn, (pt, _) in vertex_properties.items()]
        vrec = np.zeros(n, dtype=fields)
        vrec["x"], vrec["y"], vrec["z"] = np.asarray(vertices, dtype=float).T
        for pn, (_, arr) in vertex_properties.items():
            vrec[pn] = arr
        frec = np.zeros(m, dtype=[("n", "u1"), ("i", "<i4", 3)])
        frec["n"] = 3
        frec["i"] = triangles
        return header + vrec.tobytes() + frec.tobytes()
    lines = []
    props = list(vertex_properties.values())
    for i, p in enumerate(vertices):
        extra = " ".join(repr(float(arr[i])) if pt.startswith(("f", "d")) else str(int(arr[i]))
                         for pt, arr in props)
        lines.append(" ".join(repr(float(c)) for c in p) + (" " + extra if extra else ""))
    for t in triangles:
        lines.append("3 " + " ".join(str(int(i)) for i in t))
    return header + ("\n".join(lines) + "\n").encode("ascii")


def read_ply_bytes(data: bytes):
    """Parse PLY. Returns ``(vertices, triangles, extra_vertex_properties)``.

    Polygonal faces are fan-triangulated.
    """
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("not a PLY file or missing end_header", offset=0)
    body = end + len(b"end_header")
    if data[body:body + 2] == b"\r\n":
        body += 2
    elif data[body:body + 1] == b"\n":
        body += 1
    header = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []  # (name, count, [(pname, type) or (pname, ('list', ctype, itype))])
    for line in header[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before element", offset=data.find(line.encode()))
            if tok[1] == "list":
                elements[-1][2].append((tok[4], ("list", tok[2], tok[3])))
            else:
                if tok[1] not in _PLY_TYPES:
                    raise ParseError(f"unknown PLY type {tok[1]!r}", offset=data.find(line.encode()))
                elements[-1][2].append((tok[2], tok[1]))
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise ParseError(f"unsupported PLY format {fmt!r}", offset=0)
    values = {}
    if fmt == "ascii":
        _read_ply_ascii(data, body, elements, values)
    else:
        _read_ply_binary(data, body, elements, values, "<" if fmt.endswith("little_endian") else ">")
    if "vertex" not in values:
        raise ParseError("no vertex element", offset=0)
    vprops = values["vertex"]
    try:
        verts = np.column_stack([vprops["x"], vprops["y"], vprops["z"]]).astype(float)
    except KeyError as exc:
        raise ParseError(f"vertex element lacks {exc}", offset=0) from None
    faces = values.get("face", {})
    lists = faces.get("vertex_indices", faces.get("vertex_index", []))
    tris = []
    for poly in lists:
        for k in range(1, len(poly) - 1):
            tris.append((poly[0], poly[k], poly[k + 1]))
    extra = {k: np.asarray(v) for k, v in vprops.items() if k not in ("x", "y", "z")}
    return verts, np.array(tris, dtype=np.int64).reshape(-1, 3), extra


def _read_ply_ascii(data, pos, elements, values):
    text = data[pos:]
    offsets = []
    lines = []
    start = 0
    for raw in text.split(b"\n"):
        if raw.strip():
            lines.append(raw)
            offsets.append(pos + start)
        start += len(raw) + 1
    li = 0
    for name, count, props in elements:
        store = {p: [] for p, _ in props}
        for _ in range(count):
            if li >= len(lines):
                raise ParseError(f"truncated PLY: element {name!r} incomplete", offset=len(data))
            tok = lines[li].split()
            k = 0
            try:
                for pname, ptype in props:
                    if isinstance(ptype, tuple):
                        n = int(tok[k])
                        store[pname].append([int(x) for x in tok[k + 1:k + 1 + n]])
                        if len(store[pname][-1]) != n:
                            raise IndexError
                        k += 1 + n
                    else:
                        store[pname].append(float(tok[k]))
                        k += 1
            except (IndexError, ValueError):
                raise ParseError(f"bad {name!r} record", offset=offsets[li]) from None
            li += 1
        values[name] = store


def _read_ply_binary(data, pos, elements, values, endian):
    for name, count, props in elements:
        has_list = any(isinstance(t, tuple) for _, t in props)
        if not has_list:
            dt = np.dtype([(p, endian + _PLY_TYPES[t]) for p, t in props])
            nbytes = dt.itemsize * count
            if pos + nbytes > len(data):
                raise ParseError(f"truncated PLY: element {name!r} incomplete", offset=len(data))
            arr = np.frombuffer(data, dtype=dt, count=count, offset=pos)
            values[name] = {p: arr[p].astype(float) for p, _ in props}
            pos += nbytes
            continue
        # fast path: a single list property of triangles
        if len(props) == 1:
            pname, (_, ctype, itype) = props[0]
            cdt = np.dtype(endian + _PLY_TYPES[ctype])
            idt = np.dtype(endian + _PLY_TYPES[itype])
            rec = np.dtype([("n", cdt), ("i", idt, 3)])
            nbytes = rec.itemsize * count
            if pos + nbytes <= len(data):
                arr = np.frombuffer(data, dtype=rec, count=count, offset=pos)
                if count == 0 or np.all(arr["n"] == 3):
                    values[name] = {pname: arr["i"].astype(np.int64).tolist()}
                    pos += nbytes
                    continue
        store = {p: [] for p, _ in props}
        for _ in range(count):
            for pname, ptype in props:
                try:
                    if isinstance(ptype, tuple):
                        _, ctype, itype = ptype
                        cdt = np.dtype(endian + _PLY_TYPES[ctype])
                        n = int(np.frombuffer(data, cdt, 1, pos)[0])
                        pos += cdt.itemsize
                        idt = np.dtype(endian + _PLY_TYPES[itype])
                        store[pname].append(np.frombuffer(data, idt, n, pos).astype(int).tolist())
                        pos += idt.itemsize * n
                    else:
                        dt = np.dtype(endian + _PLY_TYPES[ptype])
                        store[pname].append(float(np.frombuffer(data, dt, 1, pos)[0]))
                        pos += dt.itemsize
                except ValueError:
                    raise ParseError(f"truncated PLY: element {name!r} incomplete",
                                     offset=pos) from None
        values[name] = store


# STL (binary; ASCII accepted on read) -------------------------------------------

def _stl_bytes(mesh: TriangleMesh) -> bytes:
    rec = np.zeros(mesh.n_triangles, dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("a", "<u2")])
    rec["n"] = mesh.face_normals
    rec["v"] = mesh.vertices[mesh.triangles]
    header = b"jawkit binary STL".ljust(80, b" ")
    return header + struct.pack("<I", mesh.n_triangles) + rec.tobytes()


def _read_stl(data: bytes):
    if data[:5].lower() == b"solid" and b"facet" in data[:1024]:
        return _read_stl_ascii(data)
    if len(data) < 84:
        raise ParseError("truncated STL header", offset=len(data))
    (n,) = struct.unpack_from("<I", data, 80)
    need = 84 + 50 * n
    if len(data) < need:
        raise ParseError(f"truncated STL: expected {need} bytes, got {len(data)}", offset=len(data))
    rec = np.frombuffer(data, dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("a", "<u2")],
                        count=n, offset=84)
    return _weld(rec["v"].reshape(-1, 3).astype(np.float64))


def _read_stl_ascii(data: bytes):
    pts = []
    for lineno, line in enumerate(data.decode("ascii", errors="replace").splitlines()):
        tok = line.split()
        if tok and tok[0] == "vertex":
            try:
                pts.append([float(x) for x in tok[1:4]])
            except ValueError:
                raise ParseError(f"bad vertex on line {lineno + 1}") from None
    if len(pts) % 3:
        raise ParseError("truncated ASCII STL", offset=len(data))
    return _weld(np.array(pts, dtype=float).reshape(-1, 3))


def _weld(points):
    uniq, inv = np.unique(points, axis=0, return_inverse=True)
    return uniq, inv.reshape(-1, 3)


# OBJ ----------------------------------------------------------------------------

def _obj_bytes(mesh: TriangleMesh) -> bytes:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    return ("\n".join(lines) + "\n").encode("ascii")


def _read_obj(data: bytes):
    verts, faces = [], []
    offset = 0
    for raw in data.split(b"\n"):
        tok = raw.split()
        try:
            if tok and tok[0] == b"v":
                if len(tok) < 4:
                    raise ValueError
                verts.append([float(x) for x in tok[1:4]])
            elif tok and tok[0] == b"f":
                idx = []
                for t in tok[1:]:
                    i = int(t.split(b"/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise ValueError
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
        except ValueError:
            raise ParseError(f"bad OBJ record {raw[:40]!r}", offset=offset) from None
        offset += len(raw) + 1
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)
