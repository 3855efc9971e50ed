"""Surface measurement atoms shared by the sensing and mapping layers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_NORMAL_TOL = 1e-6


@dataclass(frozen=True)
class SurfaceSample:
    """A 3-D surface point with outward unit normal and its noise level."""

    position: np.ndarray
    normal: np.ndarray
    noise_sigma: float

    def __post_init__(self):
        p = np.array(self.position, dtype=np.float64).reshape(3)
        n = np.array(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > _NORMAL_TOL:
            raise ValueError("sample normal must be unit length")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")
        p.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))


def samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pack a sample list into (positions (n,3), normals (n,3), sigmas (n,))."""
    if not samples:
        return (np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))
    pos = np.array([s.position for s in samples])
    nrm = np.array([s.normal for s in samples])
    sig = np.array([s.noise_sigma for s in samples])
    return pos, nrm, sig


def samples_from_arrays(positions, normals, sigmas) -> list[SurfaceSample]:
    return [SurfaceSample(p, n, float(s))
            for p, n, s in zip(positions, normals, sigmas)]
