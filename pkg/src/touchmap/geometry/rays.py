"""Ray casting against triangle meshes.

A median-split BVH over face bounding boxes accelerates single-ray queries
and in-box face lookups; bulk rendering uses a vectorized Moller-Trumbore
pass over candidate faces. Brute-force variants are kept as reference
implementations for testing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS_PARALLEL = 1e-12
_UNIT_TOL = 1e-9
_LEAF_SIZE = 8


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.array(self.origin, dtype=np.float64).reshape(3)
        d = np.array(self.direction, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > _UNIT_TOL:
            raise ValueError("ray direction must be unit length")
        o.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class RayHit:
    distance: float
    point: np.ndarray
    face_index: int
    face_normal: np.ndarray  # unit, oriented against the ray direction


class Bvh:
    """Static bounding-volume hierarchy over mesh faces."""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=np.float64)
        self.faces = np.asarray(faces, dtype=np.int64)
        tri = self.vertices[self.faces]
        self._tri = tri
        lo = tri.min(axis=1)
        hi = tri.max(axis=1)
        centers = tri.mean(axis=1)

        # flat node arrays, built by recursive median split on the widest axis
        boxes_lo: list[np.ndarray] = []
        boxes_hi: list[np.ndarray] = []
        lefts: list[int] = []
        rights: list[int] = []
        starts: list[int] = []
        counts: list[int] = []
        order = np.arange(len(faces))

        def build(idx: np.ndarray) -> int:
            node = len(boxes_lo)
            boxes_lo.append(lo[idx].min(axis=0))
            boxes_hi.append(hi[idx].max(axis=0))
            lefts.append(-1)
            rights.append(-1)
            starts.append(-1)
            counts.append(0)
            if len(idx) <= _LEAF_SIZE:
                starts[node] = len(leaf_faces)
                counts[node] = len(idx)
                leaf_faces.extend(idx.tolist())
                return node
            axis = int(np.argmax(boxes_hi[node] - boxes_lo[node]))
            keys = centers[idx, axis]
            half = len(idx) // 2
            part = np.argpartition(keys, half)
            left_idx, right_idx = idx[part[:half]], idx[part[half:]]
            lefts[node] = build(left_idx)
            rights[node] = build(right_idx)
            return node

        leaf_faces: list[int] = []
        if len(faces):
            build(order)
        self._box_lo = np.array(boxes_lo).reshape(-1, 3)
        self._box_hi = np.array(boxes_hi).reshape(-1, 3)
        self._left = np.array(lefts, dtype=np.int64)
        self._right = np.array(rights, dtype=np.int64)
        self._start = np.array(starts, dtype=np.int64)
        self._count = np.array(counts, dtype=np.int64)
        self._leaf_faces = np.array(leaf_faces, dtype=np.int64)

    # -- queries ------------------------------------------------------------

    def raycast(self, ray: Ray) -> RayHit | None:
        """Nearest intersection along the positive ray, or None on a miss.

        Ties on distance are broken by the smaller face index so results are
        identical to a brute-force scan.
        """
        if not len(self._left):
            return None
        best = _traverse_nearest(
            ray.origin, ray.direction, self._box_lo, self._box_hi, self._left,
            self._right, self._start, self._count, self._leaf_faces, self._tri)
        if best is None:
            return None
        t, fi = best
        return _make_hit(ray, t, fi, self._tri)

    def count_crossings(self, origin: np.ndarray, direction: np.ndarray) -> int:
        """Number of triangle crossings along the full positive ray."""
        if not len(self._left):
            return 0
        hits = 0
        inv = _safe_inverse(direction)
        stack = [0]
        while stack:
            node = stack.pop()
            if not _slab_hit(origin, inv, self._box_lo[node], self._box_hi[node], np.inf):
                continue
            if self._count[node] > 0:
                fidx = self._leaf_faces[self._start[node]:self._start[node] + self._count[node]]
                t, _, _ = _moller_trumbore(origin[None, :], direction[None, :], self._tri[fidx])
                hits += int(np.count_nonzero(np.isfinite(t)))
            else:
                stack.append(self._left[node])
                stack.append(self._right[node])
        return hits

    def faces_in_box(self, box_lo: np.ndarray, box_hi: np.ndarray) -> np.ndarray:
        """Indices of faces whose bounding boxes overlap [box_lo, box_hi]."""
        if not len(self._left):
            return np.zeros(0, dtype=np.int64)
        out: list[np.ndarray] = []
        stack = [0]
        while stack:
            node = stack.pop()
            if np.any(self._box_lo[node] > box_hi) or np.any(self._box_hi[node] < box_lo):
                continue
            if self._count[node] > 0:
                fidx = self._leaf_faces[self._start[node]:self._start[node] + self._count[node]]
                tri = self._tri[fidx]
                keep = ~(np.any(tri.min(axis=1) > box_hi, axis=1)
                         | np.any(tri.max(axis=1) < box_lo, axis=1))
                out.append(fidx[keep])
            else:
                stack.append(self._left[node])
                stack.append(self._right[node])
        if not out:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(out))


def _safe_inverse(direction: np.ndarray) -> np.ndarray:
    d = np.where(np.abs(direction) < 1e-300, 1e-300, direction)
    return 1.0 / d


def _slab_hit(origin, inv_dir, lo, hi, t_best) -> bool:
    t0 = (lo - origin) * inv_dir
    t1 = (hi - origin) * inv_dir
    tmin = np.minimum(t0, t1).max()
    tmax = np.maximum(t0, t1).min()
    return tmax >= max(tmin, 0.0) and tmin <= t_best


def _traverse_nearest(origin, direction, box_lo, box_hi, left, right, start, count,
                      leaf_faces, tri):
    inv = _safe_inverse(direction)
    best_t = np.inf
    best_f = -1
    stack = [0]
    while stack:
        node = stack.pop()
        if not _slab_hit(origin, inv, box_lo[node], box_hi[node], best_t):
            continue
        if count[node] > 0:
            fidx = leaf_faces[start[node]:start[node] + count[node]]
            t, _, _ = _moller_trumbore(origin[None, :], direction[None, :], tri[fidx])
            t = t[0]
            ok = np.isfinite(t)
            for local in np.flatnonzero(ok):
                ti, fi = t[local], int(fidx[local])
                if ti < best_t or (ti == best_t and fi < best_f):
                    best_t, best_f = ti, fi
        else:
            stack.append(left[node])
            stack.append(right[node])
    if best_f < 0:
        return None
    return best_t, best_f


def _make_hit(ray: Ray, t: float, face_index: int, tri: np.ndarray) -> RayHit:
    point = ray.origin + t * ray.direction
    a, b, c = tri[face_index]
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n)
    if np.dot(n, ray.direction) > 0:
        n = -n
    return RayHit(float(t), point, int(face_index), n)


def _moller_trumbore(origins: np.ndarray, directions: np.ndarray, tri: np.ndarray,
                     t_min: float = 1e-9):
    """Vectorized ray/triangle intersection.

    origins, directions: (n, 3); tri: (m, 3, 3). Returns (t (n, m), u, v)
    with +inf where there is no intersection.
    """
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    p = np.cross(directions[:, None, :], e2[None, :, :])          # (n, m, 3)
    det = np.einsum("mk,nmk->nm", e1, p)
    ok = np.abs(det) > _EPS_PARALLEL
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origins[:, None, :] - v0[None, :, :]
    u = np.einsum("nmk,nmk->nm", s, p) * inv_det
    q = np.cross(s, e1[None, :, :])
    v = np.einsum("nk,nmk->nm", directions, q) * inv_det
    t = np.einsum("mk,nmk->nm", e2, q) * inv_det
    eps = 1e-12
    valid = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1.0 + eps) & (t > t_min)
    return np.where(valid, t, np.inf), u, v


def raycast(mesh, ray: Ray) -> RayHit | None:
    """Nearest hit of ``ray`` against ``mesh`` (BVH-accelerated)."""
    return mesh.bvh.raycast(ray)


def raycast_brute(mesh, ray: Ray) -> RayHit | None:
    """Reference implementation: test every face, keep the nearest hit."""
    tri = mesh.vertices[mesh.faces]
    t, _, _ = _moller_trumbore(ray.origin[None, :], ray.direction[None, :], tri)
    t = t[0]
    if not np.isfinite(t).any():
        return None
    best = np.min(t)
    fi = int(np.flatnonzero(t == best)[0])  # smallest index on ties
    return _make_hit(ray, float(best), fi, tri)


def raycast_batch(mesh, origins: np.ndarray, directions: np.ndarray,
                  face_indices: np.ndarray | None = None,
                  chunk: int = 4096):
    """Nearest-hit distances for many rays at once.

    Returns (t (n,), face (n,)) with t = +inf and face = -1 on misses.
    ``face_indices`` restricts the test to a candidate subset (e.g. from
    ``Bvh.faces_in_box``); rays are processed in chunks to bound memory.
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]
    fmap = None
    if face_indices is not None:
        fmap = np.asarray(face_indices, dtype=np.int64)
        tri = tri[fmap]
    n = len(origins)
    t_out = np.full(n, np.inf)
    f_out = np.full(n, -1, dtype=np.int64)
    if not len(tri):
        return t_out, f_out
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        t, _, _ = _moller_trumbore(origins[s:e], directions[s:e], tri)
        idx = np.argmin(t, axis=1)
        tv = t[np.arange(e - s), idx]
        hit = np.isfinite(tv)
        t_out[s:e] = np.where(hit, tv, np.inf)
        f_out[s:e][hit] = idx[hit]
    if fmap is not None:
        valid = f_out >= 0
        f_out[valid] = fmap[f_out[valid]]
    return t_out, f_out
