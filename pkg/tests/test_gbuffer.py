import math

import numpy as np
import pytest

from hybridblur.gbuffer import flatten, luminance, rasterize, shade
from hybridblur.rayreveal import build_accel, closest_hits
from hybridblur.scene import (Light, Material, MeshInstance, RenderConfig, Scene, Transform,
                              box_mesh, quad_mesh, unproject)

from conftest import make_camera, make_scene, quad_instance

CFG = RenderConfig()


def pixel_rays(cam):
    W, H = cam.width, cam.height
    ys, xs = np.mgrid[0:H, 0:W]
    pts = np.array([unproject(cam, (x + 0.5, y + 0.5), 1.0)
                    for x, y in zip(xs.ravel(), ys.ravel())])
    d = pts - np.asarray(cam.position)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.tile(np.asarray(cam.position, float), (len(d), 1)), d


def traced_ids(scene):
    accel = build_accel(scene)
    o, d = pixel_rays(scene.camera)
    tri, _ = closest_hits(accel, o, d)
    ids = np.where(tri >= 0, accel.tris.mesh_id[np.maximum(tri, 0)], 0)
    return ids.reshape(scene.camera.height, scene.camera.width)


def test_empty_scene():
    s = make_scene([])
    g = rasterize(s, CFG)
    assert np.all(g.mesh_id == 0)
    assert np.all(np.isinf(g.depth))
    assert np.all(g.color == np.asarray(s.environment_color))
    assert np.all(g.velocity == 0)


def test_full_screen_static_quad():
    g = rasterize(make_scene([quad_instance(1, 1.0, half=5.0)]), CFG)
    assert np.all(g.mesh_id == 1)
    assert np.all(g.velocity == 0.0)
    np.testing.assert_allclose(g.depth, 1.0, atol=1e-12)


def test_translating_quad_velocity():
    d, delta = 2.0, 0.05
    s = make_scene([quad_instance(1, d, half=3.0, shift=(delta, 0.0))])
    g = rasterize(s, CFG)
    f_px = (s.camera.height / 2) / math.tan(s.camera.vfov / 2)
    covered = g.mesh_id == 1
    assert covered.all()
    np.testing.assert_allclose(g.velocity[covered][:, 0], delta * f_px / d, atol=1e-9)
    np.testing.assert_allclose(g.velocity[covered][:, 1], 0.0, atol=1e-9)


def test_velocity_clamped_to_tile_size():
    s = make_scene([quad_instance(1, 1.0, half=3.0, shift=(1.0, 0.0))])
    g = rasterize(s, RenderConfig(tile_size=20))
    np.testing.assert_allclose(g.speed[g.mesh_id > 0], 20.0)


def test_shade_examples():
    s = Scene((), make_camera(), (Light("directional", (1.0, 0.0, 0.0)),))
    n = (0.0, 0.0, 1.0)
    np.testing.assert_allclose(shade((0, 0, 0), n, Material((0, 0, 0), (0.2, 0, 0)), s), (0.2, 0, 0))
    np.testing.assert_allclose(shade((0, 0, 0), n, Material((1, 1, 1)), s), (0, 0, 0))
    s2 = Scene((), make_camera(), (Light("directional", (0.0, 0.0, 1.0)),))
    np.testing.assert_allclose(shade((0, 0, 0), n, Material((1, 0, 0)), s2), (1, 0, 0))


def test_shade_point_light_falloff():
    s = Scene((), make_camera(), (Light("point", (0.0, 0.0, 2.0), (4.0, 4.0, 4.0)),),
              ambient=(0.25, 0.0, 0.0))
    out = shade((0, 0, 0), (0, 0, 1), Material((1, 1, 1)), s)
    np.testing.assert_allclose(out, (1.25, 1.0, 1.0))


def test_luminance_examples():
    assert luminance((0, 0, 0)) == 0
    assert luminance((1, 1, 1)) == pytest.approx(1.0, abs=1e-15)
    assert luminance((0.5, 0.25, 0.75)) == pytest.approx(
        0.2126 * 0.5 + 0.7152 * 0.25 + 0.0722 * 0.75, abs=1e-15)
    assert luminance((0.5, 0.25, 0.75)) == pytest.approx(0.33925, abs=1e-12)


def test_depth_test_two_quads_exhaustive():
    near = quad_instance(2, 2.0, half=0.4, center=(0.3, 0.1))
    far = quad_instance(1, 3.0, half=1.0, center=(-0.2, 0.0))
    s = make_scene([near, far], size=48)
    g = rasterize(s, CFG)
    cam = s.camera
    f_px = cam.focal_px
    for y in range(cam.height):
        for x in range(cam.width):
            expect, margin = 0, np.inf
            for inst, depth in ((far, 3.0), (near, 2.0)):
                X = (x + 0.5 - cam.width / 2) * depth / f_px
                Y = -(y + 0.5 - cam.height / 2) * depth / f_px
                cx, cy = inst.pose_open.translation[:2]
                h = inst.pose_open.scale[0] / 2
                m = min(h - abs(X - cx), h - abs(Y - cy))
                margin = min(margin, abs(m))
                if m >= 0:
                    expect = inst.mesh_id  # nearer quad is checked last
            if margin > 1e-9:
                assert g.mesh_id[y, x] == expect, (x, y)


def test_gbuffer_invariants():
    s = make_scene([quad_instance(1, 1.5, half=0.3, shift=(0.1, 0.05)),
                    quad_instance(2, 4.0, half=3.0)], size=64)
    g = rasterize(s, CFG)
    on = g.mesh_id > 0
    assert np.array_equal(on, np.isfinite(g.depth))
    assert np.all(g.velocity[~on] == 0)
    assert np.all(g.color[~on] == np.asarray(s.environment_color))
    np.testing.assert_allclose(np.linalg.norm(g.normal[on], axis=-1), 1.0, atol=1e-3)
    assert np.all(g.speed <= CFG.tile_size + 1e-9)
    assert np.all(g.velocity[g.mesh_id == 2] == 0)


def random_scene(rng, size=64, n=6):
    insts = []
    for i in range(n):
        pose = Transform(tuple(rng.uniform([-1.5, -1.5, -7], [1.5, 1.5, -2.5])),
                         tuple(rng.uniform(-math.pi, math.pi, 3)),
                         tuple(rng.uniform(0.4, 1.5, 3)))
        pos, nrm = box_mesh() if i % 2 else quad_mesh()
        insts.append(MeshInstance(i + 1, pos, nrm, Material(tuple(rng.uniform(0, 1, 3))), pose, pose))
    return make_scene(insts, size=size)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_raster_matches_traced_visibility(seed):
    s = random_scene(np.random.default_rng(seed))
    g = rasterize(s, CFG)
    agree = np.mean(g.mesh_id == traced_ids(s))
    assert agree >= 0.99


def test_near_plane_clipping():
    # floor quad that extends behind the camera
    pos, nrm = quad_mesh()
    pose = Transform((0.0, -1.0, -10.0), (-math.pi / 2, 0.0, 0.0), (8.0, 30.0, 1.0))
    floor = MeshInstance(1, pos, nrm, Material(), pose, pose)
    s = make_scene([floor], size=64)
    corners = flatten(s).positions.reshape(-1, 3)
    assert corners[:, 2].max() > 0 > corners[:, 2].min()
    g = rasterize(s, CFG)
    assert np.mean(g.mesh_id == traced_ids(s)) >= 0.99
    assert (g.mesh_id > 0).sum() > 0.3 * g.mesh_id.size


def test_depth_tie_goes_to_smaller_id():
    a = quad_instance(5, 2.0, half=0.5)
    b = quad_instance(3, 2.0, half=0.5)
    g = rasterize(make_scene([a, b], size=32), CFG)
    assert set(np.unique(g.mesh_id)) == {0, 3}
