from .mesh import (
    MeshError,
    TriangleMesh,
    load_mesh,
    make_box,
    make_cylinder,
    make_icosphere,
    sample_surface,
    save_mesh_obj,
    save_mesh_ply,
)
from .metrics import chamfer_distance, chamfer_distance_mm2
from .pose import RigidPose, look_at_pose
from .rays import Bvh, Ray, RayHit, raycast, raycast_batch, raycast_brute
from .samples import SurfaceSample, samples_from_arrays, samples_to_arrays
from .sdf import NonWatertightError, signed_distance, unsigned_distance

__all__ = [
    "Bvh",
    "MeshError",
    "NonWatertightError",
    "Ray",
    "RayHit",
    "RigidPose",
    "SurfaceSample",
    "TriangleMesh",
    "chamfer_distance",
    "chamfer_distance_mm2",
    "load_mesh",
    "look_at_pose",
    "make_box",
    "make_cylinder",
    "make_icosphere",
    "raycast",
    "raycast_batch",
    "raycast_brute",
    "sample_surface",
    "samples_from_arrays",
    "samples_to_arrays",
    "save_mesh_obj",
    "save_mesh_ply",
    "signed_distance",
    "unsigned_distance",
]
