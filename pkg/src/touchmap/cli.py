"""Command-line entry points.

    touchmap run --config cfg.ini [--seed N] [--snapshots K] [--out DIR]
    touchmap replay --records touches.rec --config cfg.ini [--out DIR]
    touchmap compare-gp --config cfg.ini [--max-obs N]

Exit status is 0 on success; failures print the offending pipeline step and
return 1.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import load_config
from .graph import compare_to_full_gp
from .runner import PipelineError, emit_outputs, run_experiment

log = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p.add_argument("--snapshots", type=int, default=None,
                   help="override snapshot interval (0 disables)")
    p.add_argument("--out", default=None, help="override output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="touchmap",
                                 description="incremental visuo-tactile shape mapping")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a simulated mapping experiment")
    _add_common(run_p)

    rep_p = sub.add_parser("replay", help="re-run mapping from a recorded touch stream")
    _add_common(rep_p)
    rep_p.add_argument("--records", required=True, help="touch record file")

    cmp_p = sub.add_parser("compare-gp", help="compare the spatial graph against a dense GP")
    cmp_p.add_argument("--config", required=True)
    cmp_p.add_argument("--max-obs", type=int, default=2000,
                       help="dense-GP observation cap")
    return ap


def _apply_overrides(cfg, args):
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "snapshots", None) is not None:
        updates["snapshot_interval"] = args.snapshots
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = args.out
    return replace(cfg, **updates) if updates else cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    frames, summary = run_experiment(cfg)
    emit_outputs(frames, cfg.out_dir, cfg.snapshot_interval, summary)
    conv = summary.convergence_touch
    print(f"frames={summary.frames} final_cd_mm2={summary.final_cd_mm2:.3f} "
          f"convergence_touch={'never' if conv is None else conv}")
    print(f"outputs in {cfg.out_dir}")
    return 0


def _cmd_replay(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    cfg = replace(cfg, mode="replay", records_path=args.records)
    frames, summary = run_experiment(cfg)
    emit_outputs(frames, cfg.out_dir, cfg.snapshot_interval, summary)
    print(f"replayed {summary.frames - 1} touches; "
          f"final_cd_mm2={summary.final_cd_mm2:.3f}")
    return 0


def _cmd_compare_gp(args) -> int:
    cfg = load_config(args.config)
    # build a small scene: keep adding measurements while the dense GP can
    # still be run on the accumulated set
    from .runner import _build_scene, _ingest_depth, _apply_touch  # noqa: PLC0415
    from .sensing.tactile import ExplorationPolicy, render_tactile, sample_sensor_poses
    from .runner import _rng, _STREAM_TOUCH

    scene = _build_scene(cfg)
    _ingest_depth(scene, cfg)
    policy = ExplorationPolicy(cfg.exploration_mode, cfg.touch_count, cfg.seed,
                               cfg.ring_angles, cfg.ring_heights)
    poses = sample_sensor_poses(scene.mesh, policy, cfg.press_depth_m)
    for t, pose in enumerate(poses, start=1):
        if scene.graph.measurement_count() + cfg.tactile_budget > args.max_obs:
            break
        obs = render_tactile(scene.mesh, pose, scene.sensor, cfg.heightmap_noise_m,
                             cfg.contact_threshold_m, _rng(cfg.seed, _STREAM_TOUCH, t), t)
        _apply_touch(scene, cfg, obs, t)
    report = compare_to_full_gp(scene.graph, max_observations=args.max_obs)
    print(f"observations={scene.graph.measurement_count()} "
          f"nodes_compared={len(report.node_indices)}")
    print(f"phi divergence: max={report.max_abs_phi:.3e} mean={report.mean_abs_phi:.3e}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "replay": _cmd_replay, "compare-gp": _cmd_compare_gp}
    try:
        return handler[args.command](args)
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
