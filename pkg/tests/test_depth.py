import numpy as np
import pytest

from touchmap.geometry import RigidPose, make_box, make_cylinder, make_icosphere
from touchmap.sensing import (
    CameraIntrinsics,
    DepthMap,
    depthmap_to_samples,
    hallucinate_base,
    overlooking_camera,
    render_depthmap,
    sample_sensor_poses,
    ExplorationPolicy,
)

INTR = CameraIntrinsics.from_fov(160, 120, 60.0)


def test_cube_front_face_depth():
    cube = make_box((0.1, 0.1, 0.1))
    pose = RigidPose.from_z_axis([0, 0, 1.0], [0, 0, -1.0])
    d = render_depthmap(cube, pose, INTR, noise_sigma=0)
    h, w = d.depth.shape
    center = d.depth[h // 2 - 1:h // 2 + 1, w // 2 - 1:w // 2 + 1]
    assert np.allclose(center, 0.95, atol=1e-9)


def test_all_miss_framing():
    cube = make_box((0.1, 0.1, 0.1))
    pose = RigidPose.from_z_axis([0, 0, 1.0], [0, 0, 1.0])  # looking away
    d = render_depthmap(cube, pose, INTR, noise_sigma=0)
    assert np.all(d.depth == 0)


def test_noise_statistics(icosphere_small):
    cam = overlooking_camera(icosphere_small.bbox, 0.22, 50, 20)
    intr = CameraIntrinsics.from_fov(320, 240, 60.0)
    clean = render_depthmap(icosphere_small, cam, intr, noise_sigma=0)
    noisy = render_depthmap(icosphere_small, cam, intr, noise_sigma=0.005,
                            rng=np.random.default_rng(3))
    hit = clean.depth > 0
    assert hit.sum() >= 10000
    residual = (noisy.depth - clean.depth)[hit]
    assert 0.0045 <= residual.std() <= 0.0055


def test_fronto_parallel_plane_normals():
    slab = make_box((0.2, 0.2, 0.05), center=(0, 0, -0.025))
    pose = RigidPose.from_z_axis([0, 0, 0.5], [0, 0, -1.0])
    d = render_depthmap(slab, pose, INTR, noise_sigma=0)
    samples = depthmap_to_samples(d, budget=500)
    assert len(samples) > 100
    normals = np.array([s.normal for s in samples])
    ang = np.degrees(np.arccos(np.clip(normals @ np.array([0, 0, 1.0]), -1, 1)))
    assert ang.max() < 1.0


def test_sphere_normals_within_10_degrees(icosphere_small):
    cam = overlooking_camera(icosphere_small.bbox, 0.4, 45, 30)
    d = render_depthmap(icosphere_small, cam, INTR, noise_sigma=0)
    samples = depthmap_to_samples(d, budget=500)
    p = np.array([s.position for s in samples])
    n = np.array([s.normal for s in samples])
    analytic = p / np.linalg.norm(p, axis=1, keepdims=True)
    ang = np.degrees(np.arccos(np.clip(np.einsum("ij,ij->i", n, analytic), -1, 1)))
    assert ang.max() < 10.0


def test_normals_oriented_toward_camera(icosphere_small):
    cam = overlooking_camera(icosphere_small.bbox, 0.4, 45, 30)
    d = render_depthmap(icosphere_small, cam, INTR, noise_sigma=0)
    for s in depthmap_to_samples(d, budget=200):
        assert np.dot(s.normal, cam.translation - s.position) > 0


def test_single_valid_pixel_rejected():
    depth = np.zeros((120, 160))
    depth[60, 80] = 0.5
    pose = RigidPose.from_z_axis([0, 0, 1.0], [0, 0, -1.0])
    d = DepthMap(pose, INTR, depth)
    assert depthmap_to_samples(d) == []


def test_empty_depth_map_rejected():
    pose = RigidPose.from_z_axis([0, 0, 1.0], [0, 0, -1.0])
    d = DepthMap(pose, INTR, np.zeros((120, 160)))
    with pytest.raises(ValueError):
        depthmap_to_samples(d)


def test_budget_respected(icosphere_small):
    cam = overlooking_camera(icosphere_small.bbox, 0.4, 45, 30)
    intr = CameraIntrinsics.from_fov(320, 240, 60.0)
    d = render_depthmap(icosphere_small, cam, intr, noise_sigma=0)
    samples = depthmap_to_samples(d, budget=500)
    assert 0 < len(samples) <= 500


# -- base hallucination -------------------------------------------------------

def test_base_samples_from_bottom_ring():
    cyl = make_cylinder(0.03, 0.12, 48)
    policy = ExplorationPolicy("ring-grid", 40, seed=0, ring_angles=8, ring_heights=5)
    poses = sample_sensor_poses(cyl, policy)
    bottom = [p for p in poses if p.translation[2] < -0.03]
    base = hallucinate_base(cyl.bbox, bottom[:8], noise_sigma=0.005)
    assert len(base) == len(bottom[:8])
    for s in base:
        assert s.position[2] == pytest.approx(cyl.bbox[0, 2])
        assert np.allclose(s.normal, [0, 0, -1])
        assert s.noise_sigma == pytest.approx(0.01)   # 2x inflation


def test_base_empty_poses():
    assert hallucinate_base(np.zeros((2, 3)), [], 0.005) == []


def test_base_samples_inside_box_footprint():
    box = make_box((0.06, 0.06, 0.12))
    policy = ExplorationPolicy("uniform", 30, seed=2)
    poses = sample_sensor_poses(box, policy)
    base = hallucinate_base(box.bbox, poses, noise_sigma=0.005)
    for s in base:
        assert box.bbox[0, 0] <= s.position[0] <= box.bbox[1, 0]
        assert box.bbox[0, 1] <= s.position[1] <= box.bbox[1, 1]
