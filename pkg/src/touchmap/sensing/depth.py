"""Overhead depth-camera rendering and point extraction.

A single noisy depth map seeds the map before any touches arrive. The
camera model is a pinhole with +z forward, x along image columns, y along
rows; depth values are z-depths in meters with 0 marking no return.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..geometry.mesh import TriangleMesh
from ..geometry.pose import RigidPose, look_at_pose
from ..geometry.rays import raycast_batch
from ..geometry.samples import SurfaceSample, samples_from_arrays
from .decimate import thin_to_budget

DEFAULT_DEPTH_SIGMA = 0.005


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width_px: int
    height_px: int

    def __post_init__(self):
        if min(self.fx, self.fy) <= 0 or min(self.width_px, self.height_px) < 2:
            raise ValueError("invalid camera intrinsics")

    @classmethod
    def from_fov(cls, width_px: int, height_px: int, fov_deg: float) -> "CameraIntrinsics":
        """Square pixels with the given horizontal field of view."""
        f = (width_px / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
        return cls(f, f, (width_px - 1) / 2.0, (height_px - 1) / 2.0,
                   width_px, height_px)

    def pixel_dirs(self) -> np.ndarray:
        """(H, W, 3) unnormalized camera-frame ray directions, z = 1."""
        j = np.arange(self.width_px)
        i = np.arange(self.height_px)
        a = (j - self.cx) / self.fx
        b = (i - self.cy) / self.fy
        aa, bb = np.meshgrid(a, b)
        return np.stack([aa, bb, np.ones_like(aa)], axis=-1)


@dataclass(frozen=True)
class DepthMap:
    """Camera pose + intrinsics + z-depth grid (m, 0 = no return)."""

    pose: RigidPose
    intrinsics: CameraIntrinsics
    depth: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.shape != (self.intrinsics.height_px, self.intrinsics.width_px):
            raise ValueError("depth grid shape does not match intrinsics")
        if np.any(~np.isfinite(d)) or np.any(d < 0):
            raise ValueError("depths must be finite and non-negative")
        object.__setattr__(self, "depth", d)

    def back_project(self, rows: np.ndarray, cols: np.ndarray,
                     depth: np.ndarray | None = None) -> np.ndarray:
        """World points for the given pixels (using their stored depths)."""
        d = self.depth[rows, cols] if depth is None else depth
        a = (cols - self.intrinsics.cx) / self.intrinsics.fx
        b = (rows - self.intrinsics.cy) / self.intrinsics.fy
        local = np.stack([a * d, b * d, d], axis=1)
        return self.pose.transform_points(local)


def render_depthmap(mesh: TriangleMesh, pose: RigidPose, intrinsics: CameraIntrinsics,
                    noise_sigma: float = DEFAULT_DEPTH_SIGMA,
                    rng: np.random.Generator | None = None) -> DepthMap:
    """Pinhole render of the mesh: per-pixel nearest hit, misses as 0,
    zero-mean Gaussian noise on hit depths.

    Pixels are processed in tiles; each tile tests only the faces inside its
    view cone clipped to the mesh bounds.
    """
    h, w = intrinsics.height_px, intrinsics.width_px
    dirs_cam = intrinsics.pixel_dirs()
    norms = np.linalg.norm(dirs_cam, axis=-1)
    dirs_world = pose.transform_dirs(dirs_cam / norms[..., None])
    origin = pose.translation
    lo_m, hi_m = mesh.bbox
    t = np.full((h, w), np.inf)
    tile = 32
    for r0 in range(0, h, tile):
        for c0 in range(0, w, tile):
            block = dirs_world[r0:r0 + tile, c0:c0 + tile].reshape(-1, 3)
            seg = _cone_bbox(origin, block, lo_m, hi_m)
            if seg is None:
                continue
            candidates = mesh.bvh.faces_in_box(seg[0], seg[1])
            if not len(candidates):
                continue
            origins = np.broadcast_to(origin, block.shape)
            tt, _ = raycast_batch(mesh, origins, block, face_indices=candidates)
            t[r0:r0 + tile, c0:c0 + tile] = tt.reshape(min(tile, h - r0),
                                                       min(tile, w - c0))
    hit = np.isfinite(t)
    depth = np.zeros((h, w))
    depth[hit] = t[hit] / norms[hit]            # range along the ray -> z-depth
    if noise_sigma > 0 and hit.any():
        if rng is None:
            rng = np.random.default_rng()
        depth[hit] += rng.normal(0.0, noise_sigma, int(hit.sum()))
        depth[hit] = np.maximum(depth[hit], 1e-6)
    return DepthMap(pose, intrinsics, depth)


def _cone_bbox(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Conservative AABB of a pixel tile's view cone clipped to mesh bounds.

    Any ray hit inside the bounds has a parameter within the origin's
    distance range to the box, and the cone at parameter t lies inside the
    componentwise direction extremes scaled by t. Returns (box_lo, box_hi)
    intersected with the padded bounds, or None when they cannot overlap.
    """
    closest = np.clip(origin, lo, hi)
    t0 = float(np.linalg.norm(closest - origin))
    corners = np.array([[a, b, c] for a in (lo[0], hi[0])
                        for b in (lo[1], hi[1]) for c in (lo[2], hi[2])])
    t1 = float(np.linalg.norm(corners - origin, axis=1).max())
    d_lo = dirs.min(axis=0)
    d_hi = dirs.max(axis=0)
    pts = np.array([origin + t * d for t in (t0, t1) for d in (d_lo, d_hi)])
    box_lo = np.maximum(pts.min(axis=0), lo - 1e-9)
    box_hi = np.minimum(pts.max(axis=0), hi + 1e-9)
    if np.any(box_lo > box_hi):
        return None
    return box_lo, box_hi


def overlooking_camera(bbox: np.ndarray, distance: float, elevation_deg: float = 45.0,
                       azimuth_deg: float = 30.0) -> RigidPose:
    """Camera pose looking at the center of an axis-aligned box."""
    center = 0.5 * (np.asarray(bbox[0]) + np.asarray(bbox[1]))
    el = np.radians(elevation_deg)
    az = np.radians(azimuth_deg)
    offset = distance * np.array([np.cos(el) * np.cos(az),
                                  np.cos(el) * np.sin(az),
                                  np.sin(el)])
    return look_at_pose(center + offset, center)


def depthmap_to_samples(dmap: DepthMap, budget: int = 500,
                        noise_sigma: float = DEFAULT_DEPTH_SIGMA,
                        smooth_px: float = 2.0,
                        edge_depth_gap: float = 0.02,
                        max_grazing_deg: float = 75.0) -> list[SurfaceSample]:
    """Back-project valid pixels into surface samples with normals.

    Normals come from cross products of neighboring back-projections on a
    lightly smoothed copy of the depth grid, oriented toward the camera.
    Pixels are rejected when their smoothing footprint leaves the valid
    region, when they sit on a depth discontinuity larger than
    ``edge_depth_gap``, or when the surface is seen at a grazing angle
    (normals need trustworthy neighbors); a single valid pixel therefore
    yields nothing.
    """
    depth = dmap.depth
    valid = depth > 0
    if not valid.any():
        raise ValueError("depth map has no valid pixels")

    # normalized-convolution smoothing that ignores invalid pixels
    if smooth_px > 0:
        num = ndimage.gaussian_filter(np.where(valid, depth, 0.0), smooth_px)
        den = ndimage.gaussian_filter(valid.astype(np.float64), smooth_px)
        smooth = np.where(den > 1e-9, num / np.maximum(den, 1e-9), 0.0)
    else:
        smooth = depth

    erode = max(1, int(np.ceil(2.0 * smooth_px)))
    interior = ndimage.binary_erosion(valid, iterations=erode, border_value=0)
    gap = np.zeros_like(depth)
    gap[1:-1, 1:-1] = np.maximum.reduce([
        np.abs(depth[1:-1, 1:-1] - depth[:-2, 1:-1]),
        np.abs(depth[1:-1, 1:-1] - depth[2:, 1:-1]),
        np.abs(depth[1:-1, 1:-1] - depth[1:-1, :-2]),
        np.abs(depth[1:-1, 1:-1] - depth[1:-1, 2:]),
    ])
    interior &= gap < edge_depth_gap
    rows, cols = np.nonzero(interior)
    if not len(rows):
        return []

    pts = dmap.back_project(rows, cols)
    p_r0 = dmap.back_project(rows - 1, cols, smooth[rows - 1, cols])
    p_r1 = dmap.back_project(rows + 1, cols, smooth[rows + 1, cols])
    p_c0 = dmap.back_project(rows, cols - 1, smooth[rows, cols - 1])
    p_c1 = dmap.back_project(rows, cols + 1, smooth[rows, cols + 1])
    n = np.cross(p_c1 - p_c0, p_r1 - p_r0)
    lens = np.linalg.norm(n, axis=1)
    ok = lens > 1e-12
    pts, n, lens = pts[ok], n[ok], lens[ok]
    if not len(pts):
        return []
    n /= lens[:, None]
    to_cam = dmap.pose.translation - pts
    to_cam /= np.linalg.norm(to_cam, axis=1, keepdims=True)
    facing = np.einsum("ij,ij->i", n, to_cam)
    n[facing < 0] = -n[facing < 0]
    head_on = np.abs(facing) >= np.cos(np.radians(max_grazing_deg))
    pts, n = pts[head_on], n[head_on]
    if not len(pts):
        return []

    keep = thin_to_budget(pts, budget)
    return samples_from_arrays(pts[keep], n[keep], np.full(len(keep), noise_sigma))


def hallucinate_base(object_bbox: np.ndarray, nearest_poses: list[RigidPose],
                     noise_sigma: float, sigma_scale: float = 2.0) -> list[SurfaceSample]:
    """Down-facing samples on the bottom support plane.

    Real runs cannot probe under the object, so the lowest touch positions
    are projected straight down to the support height (clamped into the
    object footprint) with an inflated noise level.
    """
    if not nearest_poses:
        return []
    bbox = np.asarray(object_bbox, dtype=np.float64).reshape(2, 3)
    samples = []
    for pose in nearest_poses:
        p = pose.translation.copy()
        p[0] = np.clip(p[0], bbox[0, 0], bbox[1, 0])
        p[1] = np.clip(p[1], bbox[0, 1], bbox[1, 1])
        p[2] = bbox[0, 2]
        samples.append(SurfaceSample(p, np.array([0.0, 0.0, -1.0]),
                                     noise_sigma * sigma_scale))
    return samples
