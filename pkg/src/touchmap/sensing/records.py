"""On-disk formats for sensor streams.

Touch streams use a simple binary record file so real sensor data can be
injected through the same door later: a magic/version header, then one
record per touch holding the pose as 12 row-major float64 (rotation rows
then translation), a timestep, the heightmap dims, the raw float32 grid,
and the contact mask as a packed bitset.

Depth maps serialize as 16-bit PNG in millimeters (0 = no return) plus a
key=value text sidecar with intrinsics and pose; the PNG quantization makes
this a lossy interchange format intended for real camera data.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from ..geometry.pose import RigidPose
from .depth import CameraIntrinsics, DepthMap
from .tactile import TactileObservation

_TOUCH_MAGIC = b"TMTR"
_TOUCH_VERSION = 1


def write_touch_records(path, observations) -> None:
    with open(path, "wb") as fh:
        fh.write(_TOUCH_MAGIC)
        fh.write(struct.pack("<I", _TOUCH_VERSION))
        for obs in observations:
            pose12 = np.hstack([obs.pose.rotation.reshape(-1), obs.pose.translation])
            fh.write(pose12.astype("<f8").tobytes())
            h, w = obs.heightmap.shape
            fh.write(struct.pack("<iII", obs.timestep, h, w))
            fh.write(obs.heightmap.astype("<f4").tobytes())
            fh.write(np.packbits(obs.contact_mask.reshape(-1)).tobytes())


def read_touch_records(path) -> list[TactileObservation]:
    out = []
    with open(path, "rb") as fh:
        if fh.read(4) != _TOUCH_MAGIC:
            raise ValueError(f"{path}: not a touch record file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _TOUCH_VERSION:
            raise ValueError(f"{path}: unsupported touch record version {version}")
        while True:
            head = fh.read(96)
            if not head:
                break
            if len(head) != 96:
                raise ValueError(f"{path}: truncated record")
            pose12 = np.frombuffer(head, dtype="<f8")
            timestep, h, w = struct.unpack("<iII", fh.read(12))
            grid = np.frombuffer(fh.read(4 * h * w), dtype="<f4").reshape(h, w)
            nbits = h * w
            packed = np.frombuffer(fh.read((nbits + 7) // 8), dtype=np.uint8)
            mask = np.unpackbits(packed)[:nbits].astype(bool).reshape(h, w)
            pose = RigidPose(pose12[:9].reshape(3, 3), pose12[9:])
            out.append(TactileObservation(pose, grid.copy(), mask, timestep))
    return out


def save_depth_png(dmap: DepthMap, png_path, meta_path) -> None:
    mm = np.clip(np.round(dmap.depth * 1000.0), 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(png_path)
    intr = dmap.intrinsics
    pose12 = np.hstack([dmap.pose.rotation.reshape(-1), dmap.pose.translation])
    lines = [
        f"width_px={intr.width_px}",
        f"height_px={intr.height_px}",
        f"fx={float(intr.fx)!r}",
        f"fy={float(intr.fy)!r}",
        f"cx={float(intr.cx)!r}",
        f"cy={float(intr.cy)!r}",
        "depth_unit_m=0.001",
        "pose=" + " ".join(repr(float(x)) for x in pose12),
    ]
    Path(meta_path).write_text("\n".join(lines) + "\n")


def load_depth_png(png_path, meta_path) -> DepthMap:
    kv = {}
    for line in Path(meta_path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
    intr = CameraIntrinsics(float(kv["fx"]), float(kv["fy"]), float(kv["cx"]),
                            float(kv["cy"]), int(kv["width_px"]), int(kv["height_px"]))
    pose12 = np.array([float(x) for x in kv["pose"].split()])
    pose = RigidPose(pose12[:9].reshape(3, 3), pose12[9:])
    unit = float(kv.get("depth_unit_m", "0.001"))
    mm = np.asarray(Image.open(png_path), dtype=np.float64)
    return DepthMap(pose, intr, mm * unit)
