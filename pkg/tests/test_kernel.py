import numpy as np
import pytest

from touchmap.kernel import (
    GpObservation,
    KernelMatrixError,
    KernelParams,
    full_gp_posterior,
    kernel_block,
    kernel_blocks_pairwise,
)


def fd_value_gradient(xi, xj, params, h):
    """Finite-difference oracle for the value->gradient covariance row."""
    out = np.zeros(3)
    for b in range(3):
        e = np.zeros(3)
        e[b] = h
        out[b] = (kernel_block(xi, xj + e, params)[0, 0]
                  - kernel_block(xi, xj - e, params)[0, 0]) / (2 * h)
    return out


def fd_gradient_gradient(xi, xj, params, h):
    """Finite-difference oracle for the gradient-gradient block, built by
    differentiating the analytic first-derivative column."""
    out = np.zeros((3, 3))
    for b in range(3):
        e = np.zeros(3)
        e[b] = h
        out[:, b] = (kernel_block(xi, xj + e, params)[1:, 0]
                     - kernel_block(xi, xj - e, params)[1:, 0]) / (2 * h)
    return out


def test_self_block_structure():
    p = KernelParams(R=1.0)
    b = kernel_block(np.zeros(3), np.zeros(3), p)
    assert b[0, 0] == pytest.approx(1.0)
    assert np.allclose(b[0, 1:], 0.0)
    assert np.allclose(b[1:, 0], 0.0)
    assert np.allclose(b[1:, 1:], 6.0 * np.eye(3))


def test_support_edge_value_zero():
    p = KernelParams(R=1.0)
    b = kernel_block(np.zeros(3), np.array([1.0, 0, 0]), p)
    assert b[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_derivative_blocks_match_finite_differences(rng):
    R = 0.3
    p = KernelParams(R=R)
    h = 1e-5 * R
    for _ in range(200):
        xi = rng.uniform(-0.1, 0.1, 3)
        xj = rng.uniform(-0.1, 0.1, 3)
        if np.linalg.norm(xi - xj) < 10 * h:
            continue
        block = kernel_block(xi, xj, p)
        fd_vg = fd_value_gradient(xi, xj, p, h)
        assert np.linalg.norm(block[0, 1:] - fd_vg) <= 1e-4 * max(np.linalg.norm(fd_vg), 1e-12)
        fd_gg = fd_gradient_gradient(xi, xj, p, h)
        assert np.linalg.norm(block[1:, 1:] - fd_gg, "fro") <= 1e-4 * np.linalg.norm(fd_gg, "fro")


def test_block_transpose_symmetry(rng):
    p = KernelParams(R=0.5)
    for _ in range(20):
        xi, xj = rng.normal(size=3) * 0.1, rng.normal(size=3) * 0.1
        assert np.allclose(kernel_block(xi, xj, p), kernel_block(xj, xi, p).T, atol=1e-14)


def test_pairwise_matches_scalar(rng):
    p = KernelParams(R=0.4)
    xa = rng.normal(size=(4, 3)) * 0.1
    xb = rng.normal(size=(5, 3)) * 0.1
    blocks = kernel_blocks_pairwise(xa, xb, p)
    for i in range(4):
        for j in range(5):
            assert np.allclose(blocks[i, j], kernel_block(xa[i], xb[j], p), atol=1e-15)


def test_prior_with_no_observations():
    p = KernelParams(R=0.7)
    means, covs = full_gp_posterior([], np.array([[0.1, 0.2, 0.3]]), p)
    assert np.allclose(means, 0.0)
    assert np.allclose(covs[0], np.diag([0.7 ** 3, 4.2, 4.2, 4.2]))


def test_single_observation_interpolation_limit():
    p = KernelParams(R=1.0)
    y = np.array([0.0, 0.0, 0.0, 1.0])
    obs = [GpObservation(np.zeros(3), y, 1e-8)]
    means, covs = full_gp_posterior(obs, np.zeros((1, 3)), p)
    assert np.allclose(means[0], y, atol=1e-10)
    assert np.abs(covs[0]).max() < 1e-10


def test_duplicate_points_zero_noise_not_pd():
    p = KernelParams(R=1.0)
    obs = [GpObservation(np.zeros(3), [0, 0, 0, 1], 1e-300),
           GpObservation(np.zeros(3), [0, 0, 0, 1], 1e-300)]
    with pytest.raises(KernelMatrixError):
        full_gp_posterior(obs, np.zeros((1, 3)), p)


def test_observation_cap():
    p = KernelParams(R=1.0)
    obs = [GpObservation(np.array([i * 0.01, 0, 0]), [0, 0, 0, 1], 1e-3)
           for i in range(11)]
    with pytest.raises(ValueError, match="cap"):
        full_gp_posterior(obs, np.zeros((1, 3)), p, max_observations=10)


def _sphere_observations(rng, n=60, radius=0.05, sigma=1e-3):
    pts = rng.normal(size=(n, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return [GpObservation(radius * d, np.concatenate([[0.0], d]), sigma) for d in pts]


def test_posterior_cov_psd(rng):
    p = KernelParams(R=0.3)
    obs = _sphere_observations(rng)
    queries = rng.uniform(-0.06, 0.06, size=(50, 3))
    _, covs = full_gp_posterior(obs, queries, p)
    for c in covs:
        assert np.allclose(c, c.T, atol=1e-10)
        assert np.linalg.eigvalsh(c).min() >= -1e-10


def test_variance_monotone_in_observations(rng):
    # conditioning on one more measurement never increases posterior variance
    p = KernelParams(R=0.3)
    obs = _sphere_observations(rng, n=30)
    queries = rng.uniform(-0.05, 0.05, size=(20, 3))
    _, cov_small = full_gp_posterior(obs[:-1], queries, p)
    _, cov_full = full_gp_posterior(obs, queries, p)
    for a, b in zip(cov_small, cov_full):
        assert np.trace(b) <= np.trace(a) + 1e-10


def test_posterior_gradient_consistent_with_value_channel(rng):
    # mean gradient channels match finite differences of the mean value
    # channel over query space
    p = KernelParams(R=0.3)
    obs = _sphere_observations(rng, n=40)
    queries = rng.uniform(-0.03, 0.03, size=(15, 3))
    h = 1e-5
    means, _ = full_gp_posterior(obs, queries, p, want_cov=False)
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        plus, _ = full_gp_posterior(obs, queries + e, p, want_cov=False)
        minus, _ = full_gp_posterior(obs, queries - e, p, want_cov=False)
        fd = (plus[:, 0] - minus[:, 0]) / (2 * h)
        scale = np.abs(fd).max()
        assert np.all(np.abs(means[:, 1 + axis] - fd) <= 0.01 * max(scale, 1e-9))


def test_sphere_zero_crossing(rng):
    # 200 noise-free samples on a 0.05 m sphere: the posterior SDF changes
    # sign at the analytic radius along random radial rays
    sphere_obs = _sphere_observations(rng, n=200, radius=0.05, sigma=1e-3)
    p = KernelParams(R=0.17)
    dirs = rng.normal(size=(20, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    ts = np.linspace(0.02, 0.08, 61)
    queries = (dirs[:, None, :] * ts[None, :, None]).reshape(-1, 3)
    means, _ = full_gp_posterior(sphere_obs, queries, p, want_cov=False)
    phi = means[:, 0].reshape(len(dirs), len(ts))
    for row in phi:
        idx = np.flatnonzero(np.diff(np.sign(row)) != 0)
        assert len(idx) >= 1
        i = idx[0]
        r = ts[i] - row[i] * (ts[i + 1] - ts[i]) / (row[i + 1] - row[i])
        assert abs(r - 0.05) < 0.002
