"""Experiment configuration: flat key=value text with section headers.

Every field has a default, so a minimal config only names the mesh:

    [mesh]
    path = objects/sphere.obj

Values of "auto" defer to run-time derivation (workspace box from the mesh
bounds, kernel scale from the workspace diagonal, and so on).
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np


@dataclass
class ExperimentConfig:
    # mesh
    mesh_path: str = ""
    mesh_scale: float = 1.0
    # grid
    grid_size: int = 16
    workspace_bbox: tuple[float, ...] | None = None   # xmin ymin zmin xmax ymax zmax
    workspace_pad: float = 0.02
    radius_fraction: float = 0.15
    # kernel / prior ("auto" = derived at run start)
    kernel_scale: float | None = None                 # R; default workspace diagonal
    prior_phi: float | None = None                    # default R
    prior_sigma_scale: float = 1.0
    # sensor
    sensor_width_px: int = 640
    sensor_height_px: int = 480
    patch_width_m: float = 0.0188326
    patch_height_m: float = 0.0141244
    max_depth_m: float = 0.001
    press_depth_m: float = 0.0005
    contact_threshold_m: float = 1e-5
    heightmap_noise_m: float = 5e-5
    # exploration
    exploration_mode: str = "uniform"
    touch_count: int = 60
    ring_angles: int = 8
    ring_heights: int = 5
    # depth camera
    depth_width_px: int = 160
    depth_height_px: int = 120
    depth_fov_deg: float = 60.0
    depth_distance: float | None = None               # default 2.5x object diagonal
    depth_elevation_deg: float = 45.0
    depth_azimuth_deg: float = 30.0
    depth_noise_m: float = 0.005
    # sample budgets and noise weights
    tactile_budget: int = 60
    tactile_sigma_m: float = 0.0005
    depth_budget: int = 500
    depth_sigma_m: float = 0.005
    # base hallucination (real-style runs)
    hallucinate_base: bool = False
    base_sigma_scale: float = 2.0
    # run control
    seed: int = 0
    snapshot_interval: int = 30
    out_dir: str = "out"
    mode: str = "sim"
    records_path: str = ""                            # write touch records when set
    cd_samples: int = 10000

    def __post_init__(self):
        if self.mode not in ("sim", "replay"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.exploration_mode not in ("uniform", "ring-grid"):
            raise ValueError(f"unknown exploration mode {self.exploration_mode!r}")
        if self.touch_count < 0:
            raise ValueError("touch_count must be non-negative")

    def validate_paths(self) -> None:
        if not self.mesh_path:
            raise ValueError("config must set [mesh] path")
        if not Path(self.mesh_path).exists():
            raise FileNotFoundError(f"mesh file not found: {self.mesh_path}")

    def workspace(self, mesh_bbox: np.ndarray) -> np.ndarray:
        """Workspace box: configured explicitly or mesh bounds plus padding."""
        if self.workspace_bbox is not None:
            return np.array(self.workspace_bbox, dtype=np.float64).reshape(2, 3)
        b = np.asarray(mesh_bbox, dtype=np.float64)
        return np.stack([b[0] - self.workspace_pad, b[1] + self.workspace_pad])


# section -> (key, attribute) bindings for the config file
_SCHEMA = {
    "mesh": [("path", "mesh_path"), ("scale", "mesh_scale")],
    "grid": [("size", "grid_size"), ("bbox", "workspace_bbox"),
             ("pad", "workspace_pad"), ("radius_fraction", "radius_fraction")],
    "kernel": [("scale", "kernel_scale")],
    "prior": [("phi", "prior_phi"), ("sigma_scale", "prior_sigma_scale")],
    "sensor": [("width_px", "sensor_width_px"), ("height_px", "sensor_height_px"),
               ("patch_width", "patch_width_m"), ("patch_height", "patch_height_m"),
               ("max_depth", "max_depth_m"), ("press_depth", "press_depth_m"),
               ("contact_threshold", "contact_threshold_m"),
               ("heightmap_noise", "heightmap_noise_m")],
    "exploration": [("mode", "exploration_mode"), ("touch_count", "touch_count"),
                    ("ring_angles", "ring_angles"), ("ring_heights", "ring_heights")],
    "depth": [("width_px", "depth_width_px"), ("height_px", "depth_height_px"),
              ("fov_deg", "depth_fov_deg"), ("distance", "depth_distance"),
              ("elevation_deg", "depth_elevation_deg"),
              ("azimuth_deg", "depth_azimuth_deg"), ("noise", "depth_noise_m"),
              ("budget", "depth_budget"), ("sigma", "depth_sigma_m")],
    "tactile": [("budget", "tactile_budget"), ("sigma", "tactile_sigma_m")],
    "base": [("hallucinate", "hallucinate_base"), ("sigma_scale", "base_sigma_scale")],
    "run": [("seed", "seed"), ("snapshot_interval", "snapshot_interval"),
            ("out_dir", "out_dir"), ("mode", "mode"), ("records", "records_path"),
            ("cd_samples", "cd_samples")],
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(attr: str, raw: str):
    raw = raw.strip()
    if raw.lower() == "auto":
        return None
    t = _FIELD_TYPES[attr]
    if attr == "workspace_bbox":
        vals = tuple(float(x) for x in raw.replace(",", " ").split())
        if len(vals) != 6:
            raise ValueError("bbox needs 6 numbers: xmin ymin zmin xmax ymax zmax")
        return vals
    if t == "int":
        return int(raw)
    if t == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if t.startswith("float"):
        return float(raw)
    return raw


def load_config(path) -> ExperimentConfig:
    """Parse a config file over the defaults and check referenced files."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = ExperimentConfig()
    bindings = {sec: dict(pairs) for sec, pairs in _SCHEMA.items()}
    updates = {}
    for section in parser.sections():
        if section not in bindings:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in bindings[section]:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            attr = bindings[section][key]
            updates[attr] = _parse_value(attr, raw)
    cfg = replace(cfg, **updates)
    cfg.validate_paths()
    return cfg


def save_config(cfg: ExperimentConfig, path) -> None:
    lines = []
    for section, pairs in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, attr in pairs:
            val = getattr(cfg, attr)
            if val is None:
                val = "auto"
            elif attr == "workspace_bbox":
                val = " ".join(str(x) for x in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{key} = {val}")
        lines.append("")
    Path(path).write_text("\n".join(lines))
