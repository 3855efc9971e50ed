"""Geometric tactile sensing: pose sampling, patch rendering, point extraction.

Stands in for both the real sensor and its learned image-to-heightmap model:
given ground-truth geometry and a sensor pose, the gel response is rendered
directly by ray casting. The sensor frame has z pointing from the gel into
the object; the gel plane is the local z=0 plane and penetration depths are
measured against it, capped at the gel thickness.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..geometry.mesh import TriangleMesh, sample_surface, farthest_point_order
from ..geometry.pose import RigidPose
from ..geometry.rays import raycast_batch
from ..geometry.samples import SurfaceSample, samples_from_arrays
from .decimate import thin_to_budget

log = logging.getLogger(__name__)

# gel patch defaults: 4:3 aspect, about 2.66 cm^2 of sensing area
DEFAULT_PATCH_WIDTH = 0.0188326
DEFAULT_PATCH_HEIGHT = 0.0141244
DEFAULT_PRESS_DEPTH = 0.0005
DEFAULT_CONTACT_THRESHOLD = 1e-5   # 10 um of penetration counts as contact
DEFAULT_TACTILE_SIGMA = 0.0005     # noise level attached to emitted samples


class ContactMiss(RuntimeError):
    """The gel plane does not reach the surface anywhere on the patch."""


@dataclass(frozen=True)
class SensorSpec:
    """Tactile patch geometry: pixel grid, gel area (m), penetration cap (m)."""

    width_px: int = 640
    height_px: int = 480
    patch_width_m: float = DEFAULT_PATCH_WIDTH
    patch_height_m: float = DEFAULT_PATCH_HEIGHT
    max_depth_m: float = 0.001

    def __post_init__(self):
        if self.width_px < 2 or self.height_px < 2:
            raise ValueError("pixel counts must be at least 2")
        if min(self.patch_width_m, self.patch_height_m, self.max_depth_m) <= 0:
            raise ValueError("patch dimensions must be positive")

    def pixel_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Metric (u, v) coordinates of pixel centers on the gel plane."""
        u = np.linspace(-self.patch_width_m / 2, self.patch_width_m / 2, self.width_px)
        v = np.linspace(-self.patch_height_m / 2, self.patch_height_m / 2, self.height_px)
        return u, v


@dataclass(frozen=True)
class TactileObservation:
    """One touch: sensor pose, per-pixel gel penetration, contact mask.

    The mask is computed from the noise-free penetration; ``heightmap`` is
    float32 (rows = v, cols = u) so recorded streams replay bit-exactly.
    """

    pose: RigidPose
    heightmap: np.ndarray
    contact_mask: np.ndarray
    timestep: int = 0

    def __post_init__(self):
        h = np.asarray(self.heightmap, dtype=np.float32)
        m = np.asarray(self.contact_mask, dtype=bool)
        if h.shape != m.shape:
            raise ValueError("heightmap and contact mask shapes differ")
        if np.any(h < 0):
            raise ValueError("heightmap has negative penetration")
        object.__setattr__(self, "heightmap", h)
        object.__setattr__(self, "contact_mask", m)


@dataclass(frozen=True)
class ExplorationPolicy:
    """Scripted touch-pose generation.

    ``uniform`` spreads poses evenly over the surface (farthest-point
    selection from a dense area-uniform candidate set); ``ring-grid``
    approaches horizontally from a grid of azimuth angles and heights.
    """

    mode: str = "uniform"
    touch_count: int = 60
    seed: int = 0
    ring_angles: int = 8
    ring_heights: int = 5

    def __post_init__(self):
        if self.mode not in ("uniform", "ring-grid"):
            raise ValueError(f"unknown exploration mode {self.mode!r}")
        if self.touch_count < 1:
            raise ValueError("touch_count must be at least 1")


def sample_sensor_poses(mesh: TriangleMesh, policy: ExplorationPolicy,
                        press_depth: float = DEFAULT_PRESS_DEPTH) -> list[RigidPose]:
    """Touch poses with local z pointing into the surface.

    Each pose is placed so the gel plane sits ``press_depth`` past the
    contact point along the inward normal. Deterministic for a fixed policy
    seed. Candidate poses that do not intersect the mesh are skipped with a
    log message.
    """
    rng = np.random.default_rng(np.random.SeedSequence([policy.seed, 17]))
    if policy.mode == "uniform":
        candidates = max(policy.touch_count * 40, 1024)
        pts, nrm, _ = sample_surface(mesh, candidates, rng)
        order = farthest_point_order(pts, policy.touch_count, rng)
        poses = []
        for i in order:
            n = nrm[i]
            poses.append(RigidPose.from_z_axis(pts[i] - press_depth * n, -n))
        return poses

    # ring-grid: horizontal approach rays toward the vertical bbox axis
    lo, hi = mesh.bbox
    center = 0.5 * (lo + hi)
    margin = 0.1 * (hi[2] - lo[2])
    heights = np.linspace(lo[2] + margin, hi[2] - margin, policy.ring_heights)
    angles = np.linspace(0.0, 2 * np.pi, policy.ring_angles, endpoint=False)
    start_radius = 1.5 * float(np.linalg.norm((hi - lo)[:2])) + 1e-3
    poses = []
    for z in heights:
        for a in angles:
            approach = np.array([-np.cos(a), -np.sin(a), 0.0])
            origin = np.array([center[0], center[1], z]) - start_radius * approach
            t, f = raycast_batch(mesh, origin[None, :], approach[None, :])
            if f[0] < 0:
                log.warning("ring-grid pose (angle %.2f, z %.4f) misses the mesh", a, z)
                continue
            contact = origin + t[0] * approach
            poses.append(RigidPose.from_z_axis(contact + press_depth * approach, approach))
    return poses


def render_tactile(mesh: TriangleMesh, pose: RigidPose, spec: SensorSpec,
                   noise_sigma: float = 5e-5,
                   contact_threshold: float = DEFAULT_CONTACT_THRESHOLD,
                   rng: np.random.Generator | None = None,
                   timestep: int = 0,
                   backoff: float = 0.02) -> TactileObservation:
    """Render the gel response at a pose by per-pixel ray casting.

    Rays start ``backoff`` behind the gel plane and run along sensor z; the
    penetration at a pixel is how far the first surface crossing protrudes
    through the gel plane toward the sensor, clamped to the gel thickness.
    The contact mask thresholds the noise-free penetration, then zero-mean
    Gaussian pixel noise is added to the heightmap and re-clamped.

    Raises ContactMiss when no pixel touches, so the caller can move on.
    """
    u, v = spec.pixel_grid()
    uu, vv = np.meshgrid(u, v)                       # (H, W)
    px_local = np.stack([uu, vv, np.full_like(uu, -backoff)], axis=-1)
    direction = pose.z_axis
    sweep = (backoff + spec.max_depth_m) * direction

    # process the patch in pixel tiles; each tile tests only the faces inside
    # its slender swept box, keeping the cast near-linear in pixel count
    tile = 64
    penetration = np.zeros((spec.height_px, spec.width_px))
    t_all = np.full((spec.height_px, spec.width_px), np.inf)
    for r0 in range(0, spec.height_px, tile):
        for c0 in range(0, spec.width_px, tile):
            block = px_local[r0:r0 + tile, c0:c0 + tile].reshape(-1, 3)
            origins = pose.transform_points(block)
            lo = np.minimum(origins.min(axis=0), origins.min(axis=0) + sweep) - 1e-4
            hi = np.maximum(origins.max(axis=0), origins.max(axis=0) + sweep) + 1e-4
            candidates = mesh.bvh.faces_in_box(lo, hi)
            if not len(candidates):
                continue
            dirs = np.broadcast_to(direction, origins.shape)
            t, _ = raycast_batch(mesh, origins, dirs, face_indices=candidates)
            rows = min(tile, spec.height_px - r0)
            cols = min(tile, spec.width_px - c0)
            t_all[r0:r0 + rows, c0:c0 + cols] = t.reshape(rows, cols)
    penetration = np.where(np.isfinite(t_all),
                           np.clip(backoff - t_all, 0.0, spec.max_depth_m), 0.0)
    mask = penetration > contact_threshold
    if not mask.any():
        raise ContactMiss("sensor patch does not reach the surface")
    if noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng()
        penetration = penetration + rng.normal(0.0, noise_sigma, penetration.shape)
        penetration = np.clip(penetration, 0.0, spec.max_depth_m)
    return TactileObservation(pose, penetration.astype(np.float32), mask, timestep)


def tactile_to_samples(obs: TactileObservation, spec: SensorSpec,
                       budget: int = 60,
                       noise_sigma: float = DEFAULT_TACTILE_SIGMA,
                       erode_px: int = 3,
                       smooth_px: float = 1.5) -> list[SurfaceSample]:
    """Back-project masked pixels into world-frame surface samples.

    Normals come from central differences of a lightly smoothed heightmap,
    rotated into the world frame and oriented against sensor z (outward);
    positions use the raw heightmap. The mask is eroded a little first so
    the difference stencil stays inside the contact, then thinned down to
    ``budget`` spread-out pixels.
    """
    mask = obs.contact_mask
    if not mask.any():
        raise ValueError("observation has an empty contact mask")
    if erode_px > 0:
        eroded = ndimage.binary_erosion(mask, iterations=erode_px)
        if eroded.any():
            mask = eroded
    h = obs.heightmap.astype(np.float64)
    u, v = spec.pixel_grid()
    dv = v[1] - v[0]
    du = u[1] - u[0]
    h_grad = ndimage.gaussian_filter(h, smooth_px) if smooth_px > 0 else h
    hv, hu = np.gradient(h_grad, dv, du)

    rows, cols = np.nonzero(mask)
    local = np.stack([u[cols], v[rows], -h[rows, cols]], axis=1)
    world = obs.pose.transform_points(local)
    n_local = np.stack([-hu[rows, cols], -hv[rows, cols], -np.ones(len(rows))], axis=1)
    n_local /= np.linalg.norm(n_local, axis=1, keepdims=True)
    n_world = obs.pose.transform_dirs(n_local)

    keep = thin_to_budget(world, budget)
    return samples_from_arrays(world[keep], n_world[keep],
                               np.full(len(keep), noise_sigma))
