"""Thin-plate covariance over signed-distance value + gradient, and the
dense GP posterior used as an exactness baseline.

The scalar covariance between two points at distance d is

    k(d) = 2 d^3 - 3 R d^2 + R^3 = (d - R)^2 (2 d + R)

with support scale R chosen at least as large as the maximum expected
pairwise distance (k reaches zero at d = R; beyond that it is not a valid
covariance, so callers keep d <= R). Each pair of points gets a 4x4 block
over the channels [value, d/dx, d/dy, d/dz]:

    block[0, 0]     = k(d)
    block[0, 1+b]   = dk/dx'_b      = -6 (d - R) u_b
    block[1+a, 0]   = dk/dx_a       =  6 (d - R) u_a
    block[1+a, 1+b] = d2k/dx_a dx'_b = -6 u_a u_b / d - 6 (d - R) delta_ab

with u = x - x'. At u = 0 the block is diag(R^3, 6R, 6R, 6R).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

_NORMAL_TOL = 1e-6


class KernelMatrixError(ValueError):
    """The regularized train-train kernel is not positive definite
    (typically duplicate observation points with near-zero noise)."""


@dataclass(frozen=True)
class KernelParams:
    """Thin-plate support scale R (meters) and default observation noise."""

    R: float
    sigma_n_default: float = 1e-3

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("support scale R must be positive")
        if not self.sigma_n_default > 0:
            raise ValueError("sigma_n_default must be positive")

    def self_block(self) -> np.ndarray:
        """Covariance block of a point with itself: diag(R^3, 6R, 6R, 6R)."""
        return np.diag([self.R ** 3, 6 * self.R, 6 * self.R, 6 * self.R])


@dataclass(frozen=True)
class GpObservation:
    """One conditioning point: position, 4-channel target, noise level.

    For surface measurements the target is (0, nx, ny, nz) with a unit
    outward normal.
    """

    position: np.ndarray
    target: np.ndarray
    sigma_n: float

    def __post_init__(self):
        p = np.array(self.position, dtype=np.float64).reshape(3)
        y = np.array(self.target, dtype=np.float64).reshape(4)
        if abs(np.linalg.norm(y[1:]) - 1.0) > _NORMAL_TOL:
            raise ValueError("gradient part of the target must be a unit normal")
        if not self.sigma_n > 0:
            raise ValueError("sigma_n must be positive")
        p.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "sigma_n", float(self.sigma_n))


def observation_from_sample(sample) -> GpObservation:
    """Surface sample -> GP observation mapping the point to [0, normal]."""
    return GpObservation(sample.position, np.concatenate([[0.0], sample.normal]),
                         sample.noise_sigma)


def kernel_blocks_pairwise(xa: np.ndarray, xb: np.ndarray, params: KernelParams) -> np.ndarray:
    """All 4x4 covariance blocks between row sets xa (n,3) and xb (m,3).

    Returns (n, m, 4, 4); entry [i, j] is the covariance of
    [value, gradient] at xa[i] with [value, gradient] at xb[j].
    """
    xa = np.asarray(xa, dtype=np.float64).reshape(-1, 3)
    xb = np.asarray(xb, dtype=np.float64).reshape(-1, 3)
    u = xa[:, None, :] - xb[None, :, :]
    return _blocks_from_offsets(u, params.R)


def kernel_blocks_aligned(xa: np.ndarray, xb: np.ndarray, params: KernelParams) -> np.ndarray:
    """Covariance blocks for aligned point pairs: (n,3) x (n,3) -> (n,4,4)."""
    xa = np.asarray(xa, dtype=np.float64).reshape(-1, 3)
    xb = np.asarray(xb, dtype=np.float64).reshape(-1, 3)
    return _blocks_from_offsets(xa - xb, params.R)


def _blocks_from_offsets(u: np.ndarray, R: float) -> np.ndarray:
    d = np.linalg.norm(u, axis=-1)
    shape = u.shape[:-1]
    out = np.empty(shape + (4, 4))
    out[..., 0, 0] = 2 * d ** 3 - 3 * R * d ** 2 + R ** 3
    slope = 6.0 * (d - R)                       # dk/dd / d, factored form
    out[..., 1:, 0] = slope[..., None] * u      # derivative w.r.t. first point
    out[..., 0, 1:] = -slope[..., None] * u     # derivative w.r.t. second point
    uu = u[..., :, None] * u[..., None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d[..., None, None] > 0, uu / np.where(d == 0, 1.0, d)[..., None, None], 0.0)
    gg = -6.0 * ratio
    gg[..., 0, 0] -= slope
    gg[..., 1, 1] -= slope
    gg[..., 2, 2] -= slope
    out[..., 1:, 1:] = gg
    return out


def kernel_block(xi, xj, params: KernelParams) -> np.ndarray:
    """Single 4x4 covariance block between points xi and xj."""
    return kernel_blocks_aligned(np.asarray(xi)[None, :], np.asarray(xj)[None, :], params)[0]


def full_gp_posterior(observations, queries, params: KernelParams,
                      max_observations: int = 2000, want_cov: bool = True):
    """Dense GP posterior at query points, conditioned on all observations.

    mean = k_*^T (K + S_n)^-1 Y and cov = k_** - k_*^T (K + S_n)^-1 k_*
    with S_n the block diagonal of per-observation sigma_n^2 I. Cubic in the
    observation count; guarded by ``max_observations``.

    Returns (means (q, 4), covs (q, 4, 4)); covs is None when want_cov is
    False.
    """
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    q = len(queries)
    n = len(observations)
    if n > max_observations:
        raise ValueError(f"observation count {n} exceeds the dense-GP cap {max_observations}")
    if n == 0:
        means = np.zeros((q, 4))
        covs = np.broadcast_to(params.self_block(), (q, 4, 4)).copy() if want_cov else None
        return means, covs

    X = np.array([o.position for o in observations])
    Y = np.array([o.target for o in observations]).reshape(-1)
    sig2 = np.array([o.sigma_n ** 2 for o in observations])

    K = kernel_blocks_pairwise(X, X, params)
    K = K.transpose(0, 2, 1, 3).reshape(4 * n, 4 * n)
    K[np.arange(4 * n), np.arange(4 * n)] += np.repeat(sig2, 4)
    try:
        chol = cho_factor(K, lower=True)
    except np.linalg.LinAlgError as e:
        raise KernelMatrixError(
            "train-train kernel not positive definite; duplicate points with "
            "near-zero noise?") from e

    alpha = cho_solve(chol, Y)
    k_star = kernel_blocks_pairwise(X, queries, params)
    k_star = k_star.transpose(0, 2, 1, 3).reshape(4 * n, 4 * q)
    means = (k_star.T @ alpha).reshape(q, 4)

    covs = None
    if want_cov:
        v = cho_solve(chol, k_star)
        # only the per-query diagonal 4x4 blocks of k_*^T (K + S_n)^-1 k_*
        reduction = np.einsum("iqa,iqb->qab",
                              k_star.reshape(4 * n, q, 4), v.reshape(4 * n, q, 4))
        covs = params.self_block()[None, :, :] - reduction
        covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    return means, covs
