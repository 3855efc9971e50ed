"""Shape-similarity metrics between point sets."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Chamfer distance in m^2.

    Sum of the two directed terms, each the mean squared nearest-neighbor
    distance from one set into the other. Use ``chamfer_distance_mm2`` for
    the reporting convention.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if not len(a) or not len(b):
        raise ValueError("chamfer distance needs two non-empty point sets")
    d_ab, _ = cKDTree(b).query(a, k=1)
    d_ba, _ = cKDTree(a).query(b, k=1)
    return float(np.mean(d_ab ** 2) + np.mean(d_ba ** 2))


def chamfer_distance_mm2(a: np.ndarray, b: np.ndarray) -> float:
    """Chamfer distance reported in mm^2."""
    return chamfer_distance(a, b) * 1e6
