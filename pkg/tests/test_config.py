import numpy as np
import pytest

from touchmap.config import ExperimentConfig, load_config, save_config
from touchmap.geometry import make_icosphere, save_mesh_obj


@pytest.fixture()
def mesh_file(tmp_path):
    path = tmp_path / "sphere.obj"
    save_mesh_obj(make_icosphere(0.05, 2), path)
    return path


def test_minimal_config(tmp_path, mesh_file):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(f"[mesh]\npath = {mesh_file}\n")
    cfg = load_config(cfg_path)
    assert cfg.mesh_path == str(mesh_file)
    assert cfg.grid_size == 16
    assert cfg.touch_count == 60
    assert cfg.radius_fraction == 0.15


def test_overrides_and_auto(tmp_path, mesh_file):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(
        f"""
[mesh]
path = {mesh_file}
scale = 0.001

[grid]
size = 8
bbox = -0.1 -0.1 -0.1 0.1 0.1 0.1
radius_fraction = 0.2

[kernel]
scale = auto

[run]
seed = 7
mode = sim
""")
    cfg = load_config(cfg_path)
    assert cfg.mesh_scale == 0.001
    assert cfg.grid_size == 8
    assert cfg.workspace_bbox == (-0.1, -0.1, -0.1, 0.1, 0.1, 0.1)
    assert cfg.kernel_scale is None
    assert cfg.seed == 7


def test_missing_mesh_rejected(tmp_path):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text("[mesh]\npath = does/not/exist.obj\n")
    with pytest.raises(FileNotFoundError):
        load_config(cfg_path)


def test_unknown_key_rejected(tmp_path, mesh_file):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(f"[mesh]\npath = {mesh_file}\nbogus = 1\n")
    with pytest.raises(ValueError, match="unknown key"):
        load_config(cfg_path)


def test_save_load_roundtrip(tmp_path, mesh_file):
    cfg = ExperimentConfig(mesh_path=str(mesh_file), grid_size=12, seed=3,
                           hallucinate_base=True, depth_distance=0.5)
    path = tmp_path / "saved.ini"
    save_config(cfg, path)
    back = load_config(path)
    assert back == cfg


def test_workspace_from_mesh_bbox(mesh_file):
    cfg = ExperimentConfig(mesh_path=str(mesh_file), workspace_pad=0.02)
    bbox = np.array([[-0.05] * 3, [0.05] * 3])
    ws = cfg.workspace(bbox)
    assert np.allclose(ws, [[-0.07] * 3, [0.07] * 3])


def test_explicit_workspace(mesh_file):
    cfg = ExperimentConfig(mesh_path=str(mesh_file),
                           workspace_bbox=(-1, -1, -1, 1, 1, 1))
    ws = cfg.workspace(np.zeros((2, 3)))
    assert np.allclose(ws, [[-1] * 3, [1] * 3])
