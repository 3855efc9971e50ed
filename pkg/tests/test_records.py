import numpy as np
import pytest

from touchmap.geometry import RigidPose, make_icosphere
from touchmap.sensing import (
    CameraIntrinsics,
    SensorSpec,
    load_depth_png,
    overlooking_camera,
    read_touch_records,
    render_depthmap,
    render_tactile,
    save_depth_png,
    write_touch_records,
)


def test_touch_record_roundtrip(tmp_path, icosphere_small):
    spec = SensorSpec(width_px=80, height_px=60)
    obs = []
    for i in range(4):
        pose = RigidPose.from_z_axis([0, 0, 0.05 - 0.0005], [0, 0, -1.0])
        obs.append(render_tactile(icosphere_small, pose, spec, noise_sigma=5e-5,
                                  rng=np.random.default_rng(i), timestep=i + 1))
    path = tmp_path / "touches.rec"
    write_touch_records(path, obs)
    back = read_touch_records(path)
    assert len(back) == 4
    for a, b in zip(obs, back):
        assert np.array_equal(a.heightmap, b.heightmap)
        assert np.array_equal(a.contact_mask, b.contact_mask)
        assert np.array_equal(a.pose.matrix(), b.pose.matrix())
        assert a.timestep == b.timestep


def test_touch_record_bad_magic(tmp_path):
    path = tmp_path / "junk.rec"
    path.write_bytes(b"NOPE" + b"\0" * 64)
    with pytest.raises(ValueError, match="not a touch record"):
        read_touch_records(path)


def test_depth_png_roundtrip(tmp_path, icosphere_small):
    intr = CameraIntrinsics.from_fov(96, 64, 60.0)
    cam = overlooking_camera(icosphere_small.bbox, 0.4)
    dmap = render_depthmap(icosphere_small, cam, intr, noise_sigma=0.005,
                           rng=np.random.default_rng(5))
    png, meta = tmp_path / "d.png", tmp_path / "d.meta"
    save_depth_png(dmap, png, meta)
    back = load_depth_png(png, meta)
    # millimeter quantization bound
    assert np.abs(back.depth - dmap.depth).max() <= 0.0005 + 1e-12
    assert np.array_equal(back.pose.matrix(), dmap.pose.matrix())
    assert back.intrinsics == dmap.intrinsics
    # misses stay misses
    assert np.array_equal(back.depth == 0, dmap.depth == 0)
