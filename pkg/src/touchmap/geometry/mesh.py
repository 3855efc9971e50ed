"""Triangle meshes: validation, OBJ/PLY I/O, primitives, surface sampling.

All coordinates are meters. Meshes are immutable after construction; derived
structures (areas, bounding volumes) are cached lazily.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

DEGENERATE_AREA = 1e-12  # m^2


class MeshError(ValueError):
    """Raised for malformed mesh data (parse failures, bad topology)."""


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle mesh with optional per-vertex normals and scalar attribute.

    The scalar ``attribute`` is used to carry surface-uncertainty values on
    reconstructed meshes; it must have one entry per vertex when present.
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None
    attribute: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        if len(f):
            a = _face_areas(v, f)
            bad = np.flatnonzero(a < DEGENERATE_AREA)
            if len(bad):
                raise MeshError(f"degenerate (zero-area) faces: {bad[:8].tolist()}")
        n = self.normals
        if n is not None:
            n = np.ascontiguousarray(np.asarray(n, dtype=np.float64).reshape(-1, 3))
            if len(n) != len(v):
                raise MeshError("normal count != vertex count")
        attr = self.attribute
        if attr is not None:
            attr = np.ascontiguousarray(np.asarray(attr, dtype=np.float64).reshape(-1))
            if len(attr) != len(v):
                raise MeshError("attribute count != vertex count")
        for arr in (v, f, n, attr):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "attribute", attr)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def bbox(self) -> np.ndarray:
        """(2, 3) array of [min, max] corners."""
        if not len(self.vertices):
            return np.zeros((2, 3))
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return _face_areas(self.vertices, self.faces)

    @cached_property
    def face_normals(self) -> np.ndarray:
        v, f = self.vertices, self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def is_watertight(self) -> bool:
        """True when every undirected edge is shared by exactly two faces."""
        if not len(self.faces):
            return False
        edges = _undirected_edges(self.faces)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    @cached_property
    def bvh(self):
        from .rays import Bvh

        return Bvh(self.vertices, self.faces)

    def euler_characteristic(self) -> int:
        edges = np.unique(_undirected_edges(self.faces), axis=0)
        return self.num_vertices - len(edges) + self.num_faces

    def with_attribute(self, attribute: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.faces, self.normals, attribute)


def _face_areas(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    c = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    return 0.5 * np.linalg.norm(c, axis=1)


def _undirected_edges(faces: np.ndarray) -> np.ndarray:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return np.sort(e, axis=1)


# ---------------------------------------------------------------------------
# loading / saving

def load_mesh(path, scale: float = 1.0) -> TriangleMesh:
    """Load an OBJ or PLY file and validate it.

    ``scale`` multiplies all coordinates, e.g. 0.001 for meshes authored in
    millimeters.
    """
    path = Path(path)
    if not path.exists():
        raise MeshError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        mesh = _load_obj(path)
    elif suffix == ".ply":
        mesh = _load_ply(path)
    else:
        raise MeshError(f"unsupported mesh format: {suffix}")
    if not mesh.num_vertices or not mesh.num_faces:
        raise MeshError(f"empty mesh: {path}")
    if scale != 1.0:
        mesh = TriangleMesh(mesh.vertices * scale, mesh.faces, attribute=mesh.attribute)
    return mesh


def _load_obj(path: Path) -> TriangleMesh:
    vertices = []
    faces = []
    with open(path, "r", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: malformed vertex line")
                vertices.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                idx = []
                for token in parts[1:]:
                    s = token.split("/")[0]
                    i = int(s)
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise MeshError(f"{path}:{lineno}: face with fewer than 3 vertices")
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    try:
        return TriangleMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                            np.array(faces, dtype=np.int64).reshape(-1, 3))
    except MeshError as e:
        raise MeshError(f"{path}: {e}") from e


_PLY_TYPES = {
    "float": ("f", 4), "float32": ("f", 4), "double": ("d", 8), "float64": ("d", 8),
    "char": ("b", 1), "int8": ("b", 1), "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2), "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4), "uint": ("I", 4), "uint32": ("I", 4),
}


def _load_ply(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise MeshError(f"{path}: not a PLY file")
        fmt = None
        elements = []  # (name, count, [properties])
        while True:
            line = fh.readline()
            if not line:
                raise MeshError(f"{path}: unterminated PLY header")
            tokens = line.decode("ascii", "replace").split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                elements.append((tokens[1], int(tokens[2]), []))
            elif tokens[0] == "property":
                if not elements:
                    raise MeshError(f"{path}: property before element")
                if tokens[1] == "list":
                    elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
                else:
                    elements[-1][2].append(("scalar", tokens[1], tokens[2]))
            elif tokens[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise MeshError(f"{path}: unsupported PLY format {fmt}")
        vertices = np.zeros((0, 3))
        attribute = None
        faces: list[list[int]] = []
        for name, count, props in elements:
            if fmt == "ascii":
                rows = [fh.readline().split() for _ in range(count)]
                data = _parse_ply_ascii(rows, props, name, path)
            else:
                data = _parse_ply_binary(fh, count, props, name, path)
            if name == "vertex":
                cols = {p[2]: i for i, p in enumerate(props) if p[0] == "scalar"}
                missing = {"x", "y", "z"} - cols.keys()
                if missing:
                    raise MeshError(f"{path}: vertex element missing {sorted(missing)}")
                vertices = np.column_stack([data[cols["x"]], data[cols["y"]], data[cols["z"]]])
                if "uncertainty" in cols:
                    attribute = np.asarray(data[cols["uncertainty"]], dtype=np.float64)
            elif name == "face":
                faces = data
        tri = []
        for poly in faces:
            for k in range(1, len(poly) - 1):
                tri.append([poly[0], poly[k], poly[k + 1]])
        try:
            return TriangleMesh(vertices, np.array(tri, dtype=np.int64).reshape(-1, 3),
                                attribute=attribute)
        except MeshError as e:
            raise MeshError(f"{path}: {e}") from e


def _parse_ply_ascii(rows, props, name, path):
    if any(p[0] == "list" for p in props):
        if len(props) != 1:
            raise MeshError(f"{path}: mixed list/scalar properties unsupported")
        out = []
        for row in rows:
            n = int(row[0])
            out.append([int(x) for x in row[1 : 1 + n]])
        return out
    cols = []
    arr = np.array([[float(x) for x in row] for row in rows], dtype=np.float64)
    arr = arr.reshape(len(rows), len(props))
    for i in range(len(props)):
        cols.append(arr[:, i])
    return cols


def _parse_ply_binary(fh, count, props, name, path):
    if any(p[0] == "list" for p in props):
        if len(props) != 1:
            raise MeshError(f"{path}: mixed list/scalar properties unsupported")
        _, count_type, item_type, _ = props[0]
        cfmt, csz = _PLY_TYPES[count_type]
        ifmt, isz = _PLY_TYPES[item_type]
        out = []
        for _ in range(count):
            (n,) = struct.unpack("<" + cfmt, fh.read(csz))
            out.append(list(struct.unpack(f"<{n}{ifmt}", fh.read(n * isz))))
        return out
    fmt = "<" + "".join(_PLY_TYPES[p[1]][0] for p in props)
    size = struct.calcsize(fmt)
    raw = fh.read(size * count)
    if len(raw) != size * count:
        raise MeshError(f"{path}: truncated element {name}")
    rows = list(struct.iter_unpack(fmt, raw))
    arr = np.array(rows, dtype=np.float64)
    return [arr[:, i] for i in range(len(props))]


def save_mesh_ply(mesh: TriangleMesh, path, binary: bool = True) -> None:
    """Write a PLY file; a per-vertex float ``uncertainty`` property is
    emitted when the mesh carries a scalar attribute."""
    path = Path(path)
    has_attr = mesh.attribute is not None
    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {mesh.num_vertices}",
              "property float x", "property float y", "property float z"]
    if has_attr:
        header.append("property float uncertainty")
    header += [f"element face {mesh.num_faces}",
               "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        v = mesh.vertices.astype(np.float32)
        cols = np.column_stack([v, mesh.attribute.astype(np.float32)]) if has_attr else v
        if binary:
            fh.write(np.ascontiguousarray(cols, dtype="<f4").tobytes())
            f = mesh.faces.astype(np.int32)
            rec = np.zeros(len(f), dtype=[("n", "u1"), ("idx", "<i4", (3,))])
            rec["n"] = 3
            rec["idx"] = f
            fh.write(rec.tobytes())
        else:
            for row in cols:
                fh.write((" ".join(f"{x:.9g}" for x in row) + "\n").encode("ascii"))
            for face in mesh.faces:
                fh.write(f"3 {face[0]} {face[1]} {face[2]}\n".encode("ascii"))


def save_mesh_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---------------------------------------------------------------------------
# primitives

def make_box(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box with outward-wound faces."""
    e = np.asarray(extents, dtype=np.float64) / 2.0
    c = np.asarray(center, dtype=np.float64)
    corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                       dtype=np.float64)
    v = corners * e + c
    # index = 4*x + 2*y + z with each in {0, 1}
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for a, b, cc, d in quads:
        faces += [[a, b, cc], [a, cc, d]]
    return TriangleMesh(v, np.array(faces))


def make_icosphere(radius: float = 1.0, subdivisions: int = 3,
                   center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron; 642 vertices / 1280 faces at 3 subdivisions."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = list(verts)
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                midpoint[key] = len(verts)
                verts.append(m)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, np.array(faces))


def make_cylinder(radius: float = 0.5, height: float = 1.0, segments: int = 32,
                  center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Closed cylinder with its axis along z."""
    c = np.asarray(center, dtype=np.float64)
    theta = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    ring = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    lo = np.column_stack([ring, np.full(segments, -height / 2.0)])
    hi = np.column_stack([ring, np.full(segments, height / 2.0)])
    v = np.vstack([lo, hi, [[0, 0, -height / 2.0]], [[0, 0, height / 2.0]]]) + c
    bot_c, top_c = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i]]
        faces += [[bot_c, j, i], [top_c, segments + i, segments + j]]
    return TriangleMesh(v, np.array(faces))


# ---------------------------------------------------------------------------
# surface sampling

def sample_surface(mesh: TriangleMesh, count: int, rng: np.random.Generator):
    """Area-uniform surface samples.

    Returns (points (n,3), normals (n,3), face_indices (n,)).
    """
    if not mesh.num_faces:
        raise MeshError("cannot sample an empty mesh")
    areas = mesh.face_areas
    fi = rng.choice(len(areas), size=count, p=areas / areas.sum())
    u = rng.random(count)
    v = rng.random(count)
    su = np.sqrt(u)
    b0, b1 = 1.0 - su, su * (1.0 - v)
    b2 = 1.0 - b0 - b1
    tri = mesh.vertices[mesh.faces[fi]]
    pts = b0[:, None] * tri[:, 0] + b1[:, None] * tri[:, 1] + b2[:, None] * tri[:, 2]
    return pts, mesh.face_normals[fi], fi


def sample_surface_even(mesh: TriangleMesh, count: int):
    """Deterministic area-uniform surface samples.

    Sample counts are allocated to faces by largest remainder on area, and
    points within each face follow a fixed low-discrepancy barycentric
    pattern, so the same mesh always yields the same points and near-equal
    meshes yield near-equal point sets (stable evaluation metrics).

    Returns (points (n,3), normals (n,3)).
    """
    if not mesh.num_faces:
        raise MeshError("cannot sample an empty mesh")
    areas = mesh.face_areas
    quota = areas / areas.sum() * count
    base = np.floor(quota).astype(np.int64)
    short = count - int(base.sum())
    if short > 0:
        extra = np.argsort(-(quota - base), kind="stable")[:short]
        base[extra] += 1
    fi = np.repeat(np.arange(mesh.num_faces), base)
    # per-face sample rank 0..k-1
    rank = np.arange(len(fi)) - np.repeat(np.cumsum(base) - base, base)
    u = np.mod(0.7548776662466927 * (rank + 1), 1.0)
    v = np.mod(0.5698402909980532 * (rank + 1), 1.0)
    su = np.sqrt(u)
    b0, b1 = 1.0 - su, su * (1.0 - v)
    b2 = 1.0 - b0 - b1
    tri = mesh.vertices[mesh.faces[fi]]
    pts = b0[:, None] * tri[:, 0] + b1[:, None] * tri[:, 1] + b2[:, None] * tri[:, 2]
    return pts, mesh.face_normals[fi]


def farthest_point_order(points: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``count`` points greedily spread over ``points``.

    The first pick is random (seeded); each subsequent pick maximizes the
    distance to all previous picks, giving an even coverage ordering.
    """
    n = len(points)
    count = min(count, n)
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for k in range(1, count):
        chosen[k] = int(np.argmax(d2))
        d2 = np.minimum(d2, np.sum((points - points[chosen[k]]) ** 2, axis=1))
    return chosen
