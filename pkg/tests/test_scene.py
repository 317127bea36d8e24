import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridblur.scene import (Camera, MeshInstance, RenderConfig, SceneError, Transform,
                              load_scene, pose_at, project, quad_mesh, unproject)

from conftest import make_camera

CAMERA = {"position": [0, 0, 0], "look_at": [0, 0, -1], "up": [0, 1, 0], "vfov_deg": 60,
          "width": 32, "height": 24}

TRIANGLE_OBJ = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n"

CUBE_OBJ = """# unit cube, quad faces
v -0.5 -0.5 -0.5
v  0.5 -0.5 -0.5
v  0.5  0.5 -0.5
v -0.5  0.5 -0.5
v -0.5 -0.5  0.5
v  0.5 -0.5  0.5
v  0.5  0.5  0.5
v -0.5  0.5  0.5
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 3 4 8 7
f 2 3 7 6
f 1 5 8 4
"""


def write_scene(tmp_path, data, name="scene.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_minimal_triangle_scene(tmp_path):
    (tmp_path / "tri.obj").write_text(TRIANGLE_OBJ)
    p = write_scene(tmp_path, {"camera": CAMERA,
                               "instances": [{"mesh_id": 1, "primitive": {"obj": "tri.obj"}}]})
    scene, cfg = load_scene(p)
    assert len(scene.instances) == 1
    assert scene.instances[0].positions.shape == (1, 3, 3)
    assert cfg == RenderConfig()


def test_duplicate_mesh_id(tmp_path):
    p = write_scene(tmp_path, {"camera": CAMERA, "instances": [
        {"mesh_id": 3, "primitive": "quad"}, {"mesh_id": 3, "primitive": "box"}]})
    with pytest.raises(SceneError, match=r"instances\[1\]\.mesh_id"):
        load_scene(p)


def test_cube_obj_triangle_count(tmp_path):
    (tmp_path / "cube.obj").write_text(CUBE_OBJ)
    # independent count: each n-gon fans into n - 2 triangles
    expected = sum(len(line.split()) - 1 - 2 for line in CUBE_OBJ.splitlines()
                   if line.startswith("f "))
    assert expected == 12
    p = write_scene(tmp_path, {"camera": CAMERA,
                               "instances": [{"mesh_id": 7, "primitive": {"obj": "cube.obj"}}]})
    scene, _ = load_scene(p)
    inst = scene.instances[0]
    assert len(inst.positions) == expected
    # flat normals of a convex cube point away from its center
    centroids = inst.positions.mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", inst.normals[:, 0], centroids) > 0)


def test_missing_mesh_file(tmp_path):
    p = write_scene(tmp_path, {"camera": CAMERA,
                               "instances": [{"mesh_id": 1, "primitive": {"obj": "nope.obj"}}]})
    with pytest.raises(SceneError, match="primitive.obj"):
        load_scene(p)


def test_non_finite_field(tmp_path):
    p = tmp_path / "nan.json"
    p.write_text('{"camera": {"position": [0, 0, NaN], "look_at": [0, 0, -1], "up": [0, 1, 0],'
                 ' "vfov_deg": 60, "width": 16, "height": 16}}')
    with pytest.raises(SceneError, match="camera.position"):
        load_scene(p)


def test_parse_failure(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(SceneError) as info:
        load_scene(p)
    assert str(p) in str(info.value)


def test_config_overrides_and_defaults(tmp_path):
    p = write_scene(tmp_path, {"camera": CAMERA, "config": {"tile_size": 32, "id_mode": "mesh"}})
    _, cfg = load_scene(p)
    assert cfg.tile_size == 32 and cfg.id_mode == "mesh"
    assert cfg.sample_count == 15 and cfg.max_recursion == 4


def test_unknown_config_field(tmp_path):
    p = write_scene(tmp_path, {"camera": CAMERA, "config": {"bogus": 1}})
    with pytest.raises(SceneError, match="config.bogus"):
        load_scene(p)


def test_load_is_pure(tmp_path):
    (tmp_path / "cube.obj").write_text(CUBE_OBJ)
    data = {"camera": CAMERA, "ambient": [0.1, 0.1, 0.1],
            "lights": [{"kind": "directional", "direction": [0, 1, 1]},
                       {"kind": "point", "position": [1, 2, 3], "intensity": [2, 2, 2]}],
            "instances": [
                {"mesh_id": 1, "primitive": "checker_plane", "cells": 4,
                 "material": {"albedo": [0.9, 0.9, 0.9], "albedo_alt": [0.1, 0.1, 0.1]}},
                {"mesh_id": 2, "primitive": {"obj": "cube.obj"},
                 "pose_open": {"translation": [0, 0, -3]},
                 "pose_close": {"translation": [0.2, 0, -3], "rotation_deg": [0, 10, 0]}}]}
    p = write_scene(tmp_path, data)
    a = load_scene(p)
    b = load_scene(p)
    assert a == b
    assert len(a[0].instances[0].positions) == 32
    assert abs(np.linalg.norm(a[0].lights[0].vector) - 1.0) < 1e-12


def test_invalid_types():
    with pytest.raises(ValueError):
        Transform(scale=(1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        RenderConfig(sample_count=4)
    with pytest.raises(ValueError):
        Camera((0, 0, 0), (0, 1, 0), (0, 1, 0), 1.0, (16, 16))
    pos, nrm = quad_mesh()
    with pytest.raises(ValueError):
        MeshInstance(1, pos, 2 * nrm)


# --- pose_at ---------------------------------------------------------------

def _instance(open_t, close_t):
    pos, nrm = quad_mesh()
    return MeshInstance(1, pos, nrm, pose_open=open_t, pose_close=close_t)


def test_pose_endpoints_and_midpoint():
    a = Transform((0, 0, 0), (0.1, 0.2, 0.3), (1, 1, 1))
    b = Transform((2, 0, 0), (0.3, 0.2, 0.1), (2, 3, 4))
    inst = _instance(a, b)
    assert pose_at(inst, 0.0) == a
    assert pose_at(inst, 1.0) == b
    mid = pose_at(inst, 0.5)
    assert mid.translation == (1.0, 0.0, 0.0)
    np.testing.assert_allclose(mid.rotation, (0.2, 0.2, 0.2), atol=1e-12)
    np.testing.assert_allclose(mid.scale, (1.5, 2.0, 2.5), atol=1e-12)


@pytest.mark.parametrize("t", [-0.01, 1.5])
def test_pose_out_of_range(t):
    with pytest.raises(ValueError):
        pose_at(_instance(Transform(), Transform()), t)


# --- projection ------------------------------------------------------------

def test_project_axis_and_behind():
    cam = make_camera(64)
    xy, d = project(cam, (0.0, 0.0, -3.0))
    np.testing.assert_allclose(xy, (32.0, 32.0))
    assert d == pytest.approx(3.0)
    assert project(cam, (0.0, 0.0, 1.0)) is None
    assert project(cam, (1.0, 0.0, 0.0)) is None


def test_project_top_of_frustum():
    theta = math.radians(50.0)
    cam = Camera((0, 0, 0), (0, 0, -1), (0, 1, 0), theta, (40, 30))
    d = 2.5
    xy, depth = project(cam, (0.0, d * math.tan(theta / 2), -d))
    assert xy[1] == pytest.approx(0.0, abs=1e-9)
    assert xy[0] == pytest.approx(20.0)
    assert depth == pytest.approx(d)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(0, 64), y=st.floats(0, 48), depth=st.floats(0.01, 100.0),
       yaw=st.floats(-3, 3), pitch=st.floats(-1.2, 1.2))
def test_project_unproject_round_trip(x, y, depth, yaw, pitch):
    target = (math.cos(pitch) * math.sin(yaw), math.sin(pitch), -math.cos(pitch) * math.cos(yaw))
    cam = Camera((0.5, -1.0, 2.0), tuple(np.add((0.5, -1.0, 2.0), target)), (0, 1, 0),
                 math.radians(70), (64, 48))
    p = unproject(cam, (x, y), depth)
    xy, d = project(cam, p)
    assert abs(xy[0] - x) < 1e-6 and abs(xy[1] - y) < 1e-6
    assert d == pytest.approx(depth, rel=1e-9)


def test_transform_normals_nonuniform_scale():
    t = Transform(rotation=(0.0, 0.0, 0.4), scale=(3.0, 1.0, 1.0))
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
    n = np.array([[1.0, -1.0, 0.0]]) / math.sqrt(2)
    tp = t.apply_points(pts)
    tn = t.apply_normals(n)
    # the transformed normal stays perpendicular to the transformed tangent
    assert abs(np.dot(tp[1] - tp[0], tn[0])) < 1e-12
