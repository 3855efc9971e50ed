"""Experiment orchestration: depth-seeded incremental touch mapping.

One run renders a noisy depth map of the ground-truth mesh, folds it into
the graph at step 0, then feeds touches one at a time; after every step the
posterior surface is extracted, pruned to measurement support, and scored
by Chamfer distance against a fixed ground-truth sample set. Timing columns
cover only the graph update and query work.

Randomness is split into independent seeded streams per stage, so a run and
its record-driven replay produce identical results.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .extract import UncertainMesh, field_from_graph, marching_cubes, prune_unsupported
from .geometry.mesh import (
    TriangleMesh,
    load_mesh,
    sample_surface_even,
    save_mesh_ply,
)
from .geometry.metrics import chamfer_distance_mm2
from .graph import GpsgGraph, GridSpec, KernelParams, PriorSpec, init_graph
from .sensing.depth import (
    CameraIntrinsics,
    depthmap_to_samples,
    hallucinate_base,
    overlooking_camera,
    render_depthmap,
)
from .sensing.records import read_touch_records, write_touch_records
from .sensing.tactile import (
    ContactMiss,
    ExplorationPolicy,
    SensorSpec,
    render_tactile,
    sample_sensor_poses,
    tactile_to_samples,
)

log = logging.getLogger(__name__)

# seed-stream ids, one per independent randomness consumer
_STREAM_DEPTH = 1
_STREAM_POSES = 2
_STREAM_TOUCH = 3


class PipelineError(RuntimeError):
    def __init__(self, step: str, cause: Exception):
        super().__init__(f"[{step}] {cause}")
        self.step = step


@dataclass
class ReconstructionFrame:
    """Snapshot after one measurement step."""

    timestep: int
    mesh: UncertainMesh
    cd_mm2: float
    factors_added: int
    update_ms: float
    query_ms: float
    touches: int


@dataclass
class RunSummary:
    frames: int
    final_cd_mm2: float
    convergence_touch: int | None
    total_update_ms: float
    total_query_ms: float


def _rng(seed: int, stream: int, step: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, step]))


@dataclass
class _Scene:
    mesh: TriangleMesh
    graph: GpsgGraph
    sensor: SensorSpec
    gt_points: np.ndarray


def _build_scene(config: ExperimentConfig) -> _Scene:
    mesh = load_mesh(config.mesh_path, config.mesh_scale)
    bbox = config.workspace(mesh.bbox)
    object_side = float(np.max(mesh.bbox[1, :2] - mesh.bbox[0, :2]))
    spec = GridSpec(config.grid_size, bbox, config.radius_fraction, object_side)
    R = config.kernel_scale
    if R is None:
        R = float(np.linalg.norm(bbox[1] - bbox[0]))
    params = KernelParams(R)
    prior_phi = R if config.prior_phi is None else config.prior_phi
    prior = PriorSpec(np.array([prior_phi, 0.0, 0.0, 0.0]),
                      params.self_block() * config.prior_sigma_scale)
    graph = init_graph(spec, prior, params)
    sensor = SensorSpec(config.sensor_width_px, config.sensor_height_px,
                        config.patch_width_m, config.patch_height_m,
                        config.max_depth_m)
    gt_points, _ = sample_surface_even(mesh, config.cd_samples)
    return _Scene(mesh, graph, sensor, gt_points)


def _extract_frame(scene: _Scene, config: ExperimentConfig, timestep: int,
                   factors: int, update_ms: float, touches: int) -> ReconstructionFrame:
    graph = scene.graph
    t0 = time.perf_counter()
    graph.query("all")
    query_ms = (time.perf_counter() - t0) * 1e3
    field = field_from_graph(graph)
    mesh = marching_cubes(field)
    mesh = prune_unsupported(mesh, graph.measurement_positions(), graph.spec.radius)
    if mesh.num_faces:
        recon_pts, _ = sample_surface_even(mesh, config.cd_samples)
        cd = chamfer_distance_mm2(recon_pts, scene.gt_points)
    else:
        cd = float("inf")
    return ReconstructionFrame(timestep, mesh, cd, factors, update_ms, query_ms, touches)


def _ingest_depth(scene: _Scene, config: ExperimentConfig) -> ReconstructionFrame:
    mesh = scene.mesh
    intr = CameraIntrinsics.from_fov(config.depth_width_px, config.depth_height_px,
                                     config.depth_fov_deg)
    distance = config.depth_distance
    if distance is None:
        distance = 2.5 * float(np.linalg.norm(mesh.bbox[1] - mesh.bbox[0]))
    cam = overlooking_camera(mesh.bbox, distance, config.depth_elevation_deg,
                             config.depth_azimuth_deg)
    dmap = render_depthmap(mesh, cam, intr, config.depth_noise_m,
                           _rng(config.seed, _STREAM_DEPTH))
    samples = depthmap_to_samples(dmap, config.depth_budget, config.depth_sigma_m)
    report = scene.graph.add_measurements(samples, 0, source="depth")
    factors = report.factors_added
    update_ms = report.wall_time_ms
    if config.hallucinate_base:
        policy = ExplorationPolicy(config.exploration_mode, config.touch_count,
                                   config.seed, config.ring_angles, config.ring_heights)
        poses = sample_sensor_poses(mesh, policy, config.press_depth_m)
        zs = np.array([p.translation[2] for p in poses])
        cutoff = np.quantile(zs, 0.25) if len(zs) else 0.0
        lowest = [p for p, z in zip(poses, zs) if z <= cutoff]
        base = hallucinate_base(mesh.bbox, lowest,
                                config.depth_sigma_m, config.base_sigma_scale)
        rep2 = scene.graph.add_measurements(base, 0, source="base")
        factors += rep2.factors_added
        update_ms += rep2.wall_time_ms
    return _extract_frame(scene, config, 0, factors, update_ms, touches=0)


def run_experiment(config: ExperimentConfig, frame_hook=None):
    """Full pipeline; returns (frames, summary).

    Module failures abort with a PipelineError labeled by the step that
    raised. ``frame_hook(graph, frame)``, when given, is called after every
    frame (instrumentation for tests and monitoring).
    """
    recorded = []

    def step(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as e:  # noqa: BLE001 - relabel with the failing step
            raise PipelineError(name, e) from e

    config.validate_paths()
    scene = step("build-scene", _build_scene, config)
    frames = []

    def push(frame):
        frames.append(frame)
        if frame_hook is not None:
            frame_hook(scene.graph, frame)

    push(step("ingest-depth", _ingest_depth, scene, config))

    if config.mode == "replay":
        if not config.records_path:
            raise PipelineError("replay", ValueError("replay mode needs [run] records"))
        observations = step("read-records", read_touch_records, config.records_path)
        for obs in observations:
            push(step(f"touch-{obs.timestep}", _apply_touch,
                      scene, config, obs, obs.timestep))
    elif config.touch_count > 0:
        policy = ExplorationPolicy(config.exploration_mode, config.touch_count,
                                   config.seed, config.ring_angles, config.ring_heights)
        poses = step("sample-poses", sample_sensor_poses, scene.mesh, policy,
                     config.press_depth_m)
        for t, pose in enumerate(poses[:config.touch_count], start=1):
            try:
                obs = render_tactile(scene.mesh, pose, scene.sensor,
                                     config.heightmap_noise_m,
                                     config.contact_threshold_m,
                                     _rng(config.seed, _STREAM_TOUCH, t), t)
            except ContactMiss:
                log.warning("touch %d missed the surface; skipping pose", t)
                push(_extract_frame(scene, config, t, 0, 0.0, t))
                continue
            recorded.append(obs)
            push(step(f"touch-{t}", _apply_touch, scene, config, obs, t))
        if config.records_path:
            step("write-records", write_touch_records, config.records_path, recorded)

    summary = summarize(frames)
    return frames, summary


def _apply_touch(scene: _Scene, config: ExperimentConfig, obs, timestep: int):
    samples = tactile_to_samples(obs, scene.sensor, config.tactile_budget,
                                 config.tactile_sigma_m)
    report = scene.graph.add_measurements(samples, timestep, source="tactile")
    return _extract_frame(scene, config, timestep, report.factors_added,
                          report.wall_time_ms, touches=timestep)


def summarize(frames) -> RunSummary:
    cds = [f.cd_mm2 for f in frames]
    return RunSummary(
        frames=len(frames),
        final_cd_mm2=cds[-1] if cds else float("inf"),
        convergence_touch=convergence_touch(cds),
        total_update_ms=sum(f.update_ms for f in frames),
        total_query_ms=sum(f.query_ms for f in frames),
    )


def convergence_touch(cds, rel_change: float = 0.02, window: int = 5) -> int | None:
    """Start of the CD plateau: the first touch from which the relative CD
    change stays below ``rel_change`` for ``window`` consecutive touches."""
    small = []
    for t in range(1, len(cds)):
        prev, cur = cds[t - 1], cds[t]
        small.append(np.isfinite(prev) and np.isfinite(cur) and prev > 0
                     and abs(cur - prev) / prev < rel_change)
    for t in range(len(small) - window + 1):
        if all(small[t:t + window]):
            return t
    return None


# ---------------------------------------------------------------------------
# artifact emission

def emit_outputs(frames, out_dir, snapshot_interval: int = 30,
                 summary: RunSummary | None = None) -> None:
    """Write metrics.csv, snapshot PLYs, and a summary text file.

    metrics.csv rows are: timestep, cd_mm2, factors, update_ms, query_ms.
    The result columns (timestep, cd_mm2, factors) are deterministic for a
    fixed config; the wall-time columns are measurements and vary run to
    run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["timestep,cd_mm2,factors,update_ms,query_ms"]
    for f in frames:
        lines.append(f"{f.timestep},{f.cd_mm2!r},{f.factors_added},"
                     f"{f.update_ms:.3f},{f.query_ms:.3f}")
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")

    if snapshot_interval > 0:
        for f in frames:
            if f.timestep % snapshot_interval == 0:
                save_mesh_ply(f.mesh, out / f"recon_t{f.timestep:03d}.ply")

    if summary is None:
        summary = summarize(frames)
    conv = "never" if summary.convergence_touch is None else str(summary.convergence_touch)
    text = [
        f"frames: {summary.frames}",
        f"final_cd_mm2: {summary.final_cd_mm2!r}",
        f"convergence_touch: {conv}",
        f"total_update_ms: {summary.total_update_ms:.1f}",
        f"total_query_ms: {summary.total_query_ms:.1f}",
    ]
    (out / "summary.txt").write_text("\n".join(text) + "\n")


def metrics_result_columns(csv_text: str) -> str:
    """The deterministic columns of a metrics.csv (drops wall-time columns)."""
    rows = []
    for line in csv_text.strip().splitlines():
        parts = line.split(",")
        rows.append(",".join(parts[:3]))
    return "\n".join(rows)
