from .decimate import thin_to_budget
from .depth import (
    CameraIntrinsics,
    DepthMap,
    depthmap_to_samples,
    hallucinate_base,
    overlooking_camera,
    render_depthmap,
)
from .records import (
    load_depth_png,
    read_touch_records,
    save_depth_png,
    write_touch_records,
)
from .tactile import (
    ContactMiss,
    ExplorationPolicy,
    SensorSpec,
    TactileObservation,
    render_tactile,
    sample_sensor_poses,
    tactile_to_samples,
)

__all__ = [
    "CameraIntrinsics",
    "ContactMiss",
    "DepthMap",
    "ExplorationPolicy",
    "SensorSpec",
    "TactileObservation",
    "depthmap_to_samples",
    "hallucinate_base",
    "load_depth_png",
    "overlooking_camera",
    "read_touch_records",
    "render_depthmap",
    "render_tactile",
    "sample_sensor_poses",
    "save_depth_png",
    "tactile_to_samples",
    "thin_to_budget",
    "write_touch_records",
]
