"""Spatial thinning of dense pixel samples down to a sample budget.

Kept points are actual input points (no averaging, so surface samples stay
on the surface) with pairwise spacing at least the spacing in force. A
vectorized one-per-voxel pass first cuts the candidate set, then a greedy
scan through a voxel hash enforces the exact spacing; a short binary search
picks the smallest spacing whose kept count fits the budget, landing just
under the budget whenever enough pixels are available.
"""
from __future__ import annotations

import numpy as np


def _voxel_first(points: np.ndarray, spacing: float) -> np.ndarray:
    """Index of the first point in every occupied voxel, in scan order."""
    keys = np.floor(points / spacing).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return np.sort(first)


def _poisson_scan(points: np.ndarray, idx: np.ndarray, spacing: float) -> np.ndarray:
    """Greedy pass keeping points with no kept neighbor within ``spacing``."""
    s2 = spacing * spacing
    inv = 1.0 / spacing
    keys = np.floor(points[idx] * inv).astype(np.int64)
    cells: dict[tuple[int, int, int], list[int]] = {}
    kept: list[int] = []
    for row, i in enumerate(idx):
        kx, ky, kz = keys[row]
        p = points[i]
        ok = True
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for j in cells.get((kx + dx, ky + dy, kz + dz), ()):
                        q = points[j]
                        if ((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2
                                + (p[2] - q[2]) ** 2) < s2:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            kept.append(int(i))
            cells.setdefault((int(kx), int(ky), int(kz)), []).append(int(i))
    return np.array(kept, dtype=np.int64)


def _thin(points: np.ndarray, spacing: float) -> np.ndarray:
    return _poisson_scan(points, _voxel_first(points, spacing), spacing)


def thin_to_budget(points: np.ndarray, budget: int, iterations: int = 12) -> np.ndarray:
    """Indices of at most ``budget`` points, spread out by distance thinning.

    Deterministic; points are consumed in their given order.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if n <= budget:
        return np.arange(n, dtype=np.int64)
    lo_pt = points.min(axis=0)
    hi_pt = points.max(axis=0)
    hi = float(np.linalg.norm(hi_pt - lo_pt)) or 1.0
    lo = 0.0
    best = None
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid <= 0:
            break
        kept = _thin(points, mid)
        if len(kept) <= budget:
            best = kept
            hi = mid
        else:
            lo = mid
    if best is None:
        best = _thin(points, hi)
        while len(best) > budget:
            hi *= 1.5
            best = _thin(points, hi)
    return best
