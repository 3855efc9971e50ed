"""Isosurface extraction from the posterior SDF lattice, with support pruning.

Marching cubes runs over the (S-1)^3 cells of the node lattice using the
standard 256-case tables; crossing vertices are deduplicated on shared cell
edges so closed fields yield watertight meshes. Each output vertex carries
the interpolated posterior standard deviation of the SDF value. Vertices
farther than the association radius from every logged measurement are cut
afterwards, removing hallucinated geometry in unobserved space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._mc_tables import EDGE_CORNERS, EDGE_TABLE, TRI_TABLE
from .geometry.mesh import TriangleMesh
from .graph import GpsgGraph, GridSpec

# Corner offsets in (ix, iy, iz) lattice steps; bit c of a cell case marks
# corner c as inside (value < iso).
_CORNER_OFFSETS = np.array([
    (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
    (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
], dtype=np.int64)

# UncertainMesh is a TriangleMesh whose per-vertex attribute holds the SDF
# posterior standard deviation.
UncertainMesh = TriangleMesh


@dataclass(frozen=True)
class SdfField:
    """Per-node SDF posterior over a lattice: value mean, value variance,
    and whether any measurement ever supported the node."""

    spec: GridSpec
    phi: np.ndarray
    phi_var: np.ndarray
    touched: np.ndarray

    def __post_init__(self):
        s = self.spec.size
        for name in ("phi", "phi_var", "touched"):
            arr = np.asarray(getattr(self, name))
            arr = arr.reshape(s, s, s)
            if name != "touched" and not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)


def field_from_graph(graph: GpsgGraph) -> SdfField:
    """Pull the SDF value channel (mean and variance) out of the graph."""
    result = graph.query("all")
    s = graph.spec.size
    return SdfField(graph.spec,
                    result.means[:, 0].reshape(s, s, s),
                    result.covs[:, 0, 0].reshape(s, s, s),
                    graph.touched.reshape(s, s, s))


def field_from_values(spec: GridSpec, phi_flat: np.ndarray,
                      var_flat: np.ndarray | None = None) -> SdfField:
    s = spec.size
    var = np.zeros(spec.node_count) if var_flat is None else var_flat
    return SdfField(spec, np.asarray(phi_flat).reshape(s, s, s),
                    np.asarray(var).reshape(s, s, s),
                    np.ones((s, s, s), dtype=bool))


def marching_cubes(field: SdfField, iso: float = 0.0) -> UncertainMesh:
    """Triangulate the iso-level set of the SDF mean.

    Vertices are linearly interpolated along crossing lattice edges and
    shared between neighboring cells; faces are wound so that normals point
    toward increasing field values (outward for a signed distance field).
    A field with no crossing yields an empty mesh, which is a valid result
    under partial coverage.
    """
    spec = field.spec
    s = spec.size
    phi = field.phi
    var = np.maximum(field.phi_var, 0.0)
    ax, ay, az = spec.axes()

    inside = phi < iso
    # cell case index: bit c set when corner c is inside
    case = np.zeros((s - 1, s - 1, s - 1), dtype=np.int64)
    for c, (dx, dy, dz) in enumerate(_CORNER_OFFSETS):
        case |= inside[dx:s - 1 + dx, dy:s - 1 + dy, dz:s - 1 + dz] << c
    active = np.argwhere((case > 0) & (case < 255))

    verts: list[np.ndarray] = []
    sigmas: list[float] = []
    faces: list[list[int]] = []
    edge_vertex: dict[tuple[int, int], int] = {}

    def node_key(i: int, j: int, k: int) -> int:
        return (i * s + j) * s + k

    for i, j, k in active:
        cell_case = int(case[i, j, k])
        crossings = EDGE_TABLE[cell_case]
        if crossings == 0:
            continue
        slot = [-1] * 12
        for e in range(12):
            if not crossings & (1 << e):
                continue
            ca, cb = EDGE_CORNERS[e]
            a = (i + _CORNER_OFFSETS[ca][0], j + _CORNER_OFFSETS[ca][1],
                 k + _CORNER_OFFSETS[ca][2])
            b = (i + _CORNER_OFFSETS[cb][0], j + _CORNER_OFFSETS[cb][1],
                 k + _CORNER_OFFSETS[cb][2])
            key = (node_key(*a), node_key(*b))
            if key[0] > key[1]:
                key = (key[1], key[0])
                a, b = b, a
            vid = edge_vertex.get(key)
            if vid is None:
                va, vb = phi[a], phi[b]
                t = 0.5 if va == vb else (iso - va) / (vb - va)
                t = min(max(t, 0.0), 1.0)
                pa = np.array([ax[a[0]], ay[a[1]], az[a[2]]])
                pb = np.array([ax[b[0]], ay[b[1]], az[b[2]]])
                vid = len(verts)
                verts.append(pa + t * (pb - pa))
                sigmas.append(float(np.sqrt(var[a] + t * (var[b] - var[a]))))
                edge_vertex[key] = vid
            slot[e] = vid
        tri = TRI_TABLE[cell_case]
        for n in range(0, len(tri), 3):
            faces.append([slot[tri[n]], slot[tri[n + 1]], slot[tri[n + 2]]])

    if not faces:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64),
                            attribute=np.zeros(0))
    v = np.array(verts)
    f = np.array(faces, dtype=np.int64)
    # drop collapsed triangles produced when the iso level hits lattice nodes
    areas = 0.5 * np.linalg.norm(
        np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)
    f = f[areas >= 1e-12]
    mesh = TriangleMesh(v, f, attribute=np.array(sigmas))
    return _orient_outward(mesh, field, iso)


def _orient_outward(mesh: TriangleMesh, field: SdfField, iso: float) -> TriangleMesh:
    """Flip winding if face normals point toward decreasing field values."""
    if not mesh.num_faces:
        return mesh
    spec = field.spec
    spacing = (spec.bbox[1] - spec.bbox[0]) / (spec.size - 1)
    centers = mesh.vertices[mesh.faces].mean(axis=1)
    normals = mesh.face_normals
    h = 0.25 * float(spacing.min())
    grad_dot = _trilinear(field.phi, spec, centers + h * normals) \
        - _trilinear(field.phi, spec, centers - h * normals)
    agree = float(np.mean(grad_dot > 0))
    if agree < 0.5:
        mesh = TriangleMesh(mesh.vertices, mesh.faces[:, ::-1],
                            attribute=mesh.attribute)
    return mesh


def _trilinear(grid: np.ndarray, spec: GridSpec, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a lattice scalar at world points."""
    s = spec.size
    spacing = (spec.bbox[1] - spec.bbox[0]) / (s - 1)
    x = (np.asarray(points) - spec.bbox[0]) / spacing
    x = np.clip(x, 0.0, s - 1 - 1e-12)
    i0 = x.astype(np.int64)
    frac = x - i0
    out = np.zeros(len(x))
    for dx, dy, dz in _CORNER_OFFSETS:
        w = (np.where(dx, frac[:, 0], 1 - frac[:, 0])
             * np.where(dy, frac[:, 1], 1 - frac[:, 1])
             * np.where(dz, frac[:, 2], 1 - frac[:, 2]))
        out += w * grid[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    return out


def trilinear_phi(field: SdfField, points: np.ndarray) -> np.ndarray:
    return _trilinear(field.phi, field.spec, points)


def prune_unsupported(mesh: UncertainMesh, measurement_positions: np.ndarray,
                      radius: float) -> UncertainMesh:
    """Remove vertices farther than ``radius`` from every measurement.

    Faces touching a removed vertex are dropped and indices compacted. An
    empty measurement log removes everything.
    """
    if not mesh.num_vertices:
        return mesh
    positions = np.asarray(measurement_positions, dtype=np.float64).reshape(-1, 3)
    if not len(positions):
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64),
                            attribute=np.zeros(0))
    d, _ = cKDTree(positions).query(mesh.vertices, k=1)
    keep = d <= radius
    if keep.all():
        return mesh
    remap = -np.ones(mesh.num_vertices, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    face_keep = keep[mesh.faces].all(axis=1)
    attr = mesh.attribute[keep] if mesh.attribute is not None else None
    return TriangleMesh(mesh.vertices[keep], remap[mesh.faces[face_keep]],
                        attribute=attr)
