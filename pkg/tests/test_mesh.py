import numpy as np
import pytest

from touchmap.geometry import (
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
from touchmap.geometry.mesh import sample_surface_even

CUBE_OBJ = """\
v -0.5 -0.5 -0.5
v -0.5 -0.5 0.5
v -0.5 0.5 -0.5
v -0.5 0.5 0.5
v 0.5 -0.5 -0.5
v 0.5 -0.5 0.5
v 0.5 0.5 -0.5
v 0.5 0.5 0.5
f 1 2 4
f 1 4 3
f 5 7 8
f 5 8 6
f 1 5 6
f 1 6 2
f 3 4 8
f 3 8 7
f 1 3 7
f 1 7 5
f 2 6 8
f 2 8 4
"""


def test_load_unit_cube_obj(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(CUBE_OBJ)
    mesh = load_mesh(path)
    assert mesh.num_vertices == 8
    assert mesh.num_faces == 12
    assert mesh.is_watertight


def test_degenerate_face_rejected(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text(CUBE_OBJ + "f 1 1 2\n")
    with pytest.raises(MeshError, match="degenerate"):
        load_mesh(path)


def test_missing_file():
    with pytest.raises(MeshError, match="not found"):
        load_mesh("nope/missing.obj")


def test_empty_mesh_rejected(tmp_path):
    path = tmp_path / "empty.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n")
    with pytest.raises(MeshError, match="empty"):
        load_mesh(path)


def test_face_index_out_of_range():
    with pytest.raises(MeshError, match="out of range"):
        TriangleMesh(np.zeros((3, 3)) + np.eye(3), [[0, 1, 5]])


def test_obj_scale(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(CUBE_OBJ)
    mesh = load_mesh(path, scale=0.001)  # mm -> m
    assert np.allclose(mesh.bbox, [[-0.0005] * 3, [0.0005] * 3])


def test_icosphere_topology(icosphere_unit):
    # procedural oracle: closed subdivision surface keeps Euler characteristic 2
    assert icosphere_unit.num_vertices == 642
    assert icosphere_unit.num_faces == 1280
    assert icosphere_unit.euler_characteristic() == 2
    assert icosphere_unit.is_watertight
    radii = np.linalg.norm(icosphere_unit.vertices, axis=1)
    assert np.allclose(radii, 1.0, atol=1e-12)


def test_ply_roundtrip_binary_and_ascii(tmp_path, icosphere_unit):
    for binary in (True, False):
        path = tmp_path / f"sphere_{binary}.ply"
        attr = np.linspace(0, 1, icosphere_unit.num_vertices)
        save_mesh_ply(icosphere_unit.with_attribute(attr), path, binary=binary)
        back = load_mesh(path)
        assert back.num_vertices == 642
        assert back.num_faces == 1280
        assert back.euler_characteristic() == 2
        assert np.allclose(back.vertices, icosphere_unit.vertices, atol=1e-6)
        assert np.allclose(back.attribute, attr, atol=1e-6)


def test_obj_roundtrip(tmp_path, unit_cube):
    path = tmp_path / "cube.obj"
    save_mesh_obj(unit_cube, path)
    back = load_mesh(path)
    assert back.num_vertices == unit_cube.num_vertices
    assert np.allclose(back.vertices, unit_cube.vertices)


def test_box_face_normals_outward(unit_cube):
    centers = unit_cube.vertices[unit_cube.faces].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", unit_cube.face_normals, centers) > 0)


def test_cylinder_watertight():
    cyl = make_cylinder(0.03, 0.12, 24)
    assert cyl.is_watertight
    assert cyl.euler_characteristic() == 2


def test_sample_surface_on_mesh(icosphere_unit, rng):
    pts, normals, fi = sample_surface(icosphere_unit, 500, rng)
    assert pts.shape == (500, 3)
    # points on the icosphere lie slightly inside the unit sphere, never outside
    r = np.linalg.norm(pts, axis=1)
    assert np.all(r <= 1.0 + 1e-12)
    assert np.all(r >= 0.9)
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)


def test_sample_surface_even_deterministic(icosphere_unit):
    a, _ = sample_surface_even(icosphere_unit, 1000)
    b, _ = sample_surface_even(icosphere_unit, 1000)
    assert np.array_equal(a, b)
    assert len(a) == 1000


def test_attribute_length_checked(unit_cube):
    with pytest.raises(MeshError, match="attribute"):
        TriangleMesh(unit_cube.vertices, unit_cube.faces, attribute=np.zeros(3))
