import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridblur._kernels import pixel_hash01
from hybridblur.postprocess import BlurLayer, blur_filter, composite, neighbor_max, tile_max
from hybridblur.raymask import BitMask
from hybridblur.scene import RenderConfig

CFG = RenderConfig(sample_count=15, tile_size=8, depth_scale=10.0, z_extent=1.0)


def brute_tile_max(vel, k):
    H, W = vel.shape[:2]
    ty, tx = -(-H // k), -(-W // k)
    out = np.zeros((ty, tx, 2))
    for j in range(ty):
        for i in range(tx):
            block = vel[j * k:(j + 1) * k, i * k:(i + 1) * k].reshape(-1, 2)
            out[j, i] = block[np.argmax((block ** 2).sum(-1))]
    return out


def brute_neighbor_max(tv):
    TY, TX = tv.shape[:2]
    out = np.zeros_like(tv)
    for j in range(TY):
        for i in range(TX):
            cands = [tv[min(max(j + dj, 0), TY - 1), min(max(i + di, 0), TX - 1)]
                     for dj in (-1, 0, 1) for di in (-1, 0, 1)]
            out[j, i] = cands[int(np.argmax([c @ c for c in cands]))]
    return out


def test_tile_max_single_moving_pixel():
    vel = np.zeros((16, 16, 2))
    vel[5, 9] = (3.0, -4.0)
    t = tile_max(vel, 8)
    assert (t.tiles_y, t.tiles_x) == (2, 2)
    assert tuple(t.velocity[0, 1]) == (3.0, -4.0)
    assert np.count_nonzero(t.velocity.any(-1)) == 1
    n = neighbor_max(t)
    assert np.all(n.velocity == (3.0, -4.0))


def test_tile_max_partial_tiles():
    vel = np.zeros((10, 13, 2))
    vel[9, 12] = (1.0, 0.0)
    t = tile_max(vel, 4)
    assert t.velocity.shape == (3, 4, 2)
    assert tuple(t.velocity[2, 3]) == (1.0, 0.0)


def test_tile_max_tie_keeps_first():
    vel = np.zeros((4, 4, 2))
    vel[0, 1] = (0.0, 2.0)
    vel[2, 0] = (2.0, 0.0)
    assert tuple(tile_max(vel, 4).velocity[0, 0]) == (0.0, 2.0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 20), st.just(2)),
              elements=st.floats(-30, 30)),
       st.integers(1, 7))
def test_tile_and_neighbor_max_brute_force(vel, k):
    t = tile_max(vel, k)
    ref = brute_tile_max(vel, k)
    np.testing.assert_array_equal((t.velocity ** 2).sum(-1), (ref ** 2).sum(-1))
    n = neighbor_max(t)
    np.testing.assert_array_equal((n.velocity ** 2).sum(-1),
                                  (brute_neighbor_max(t.velocity) ** 2).sum(-1))


# --- gather filter ---------------------------------------------------------

def gather_oracle(color, depth, vel, ids, nmax, k, S, eps, z_ext, x, y):
    """Straight-line reference for one pixel's gather."""
    H, W = depth.shape
    nv = nmax[y // k, x // k]
    if math.hypot(*nv) < eps:
        return color[y, x], 1.0
    sp = math.hypot(*vel[y, x])
    w0 = S / (k * max(sp, eps))
    weights = [w0]
    samples = [(x, y)]
    xi = pixel_hash01(x, y)
    for i in range(1, S + 1):
        t = (i - xi) / S
        sx, sy = math.floor(x + t * nv[0] + 0.5), math.floor(y + t * nv[1] + 0.5)
        if not (0 <= sx < W and 0 <= sy < H):
            continue
        d = math.hypot(sx - x, sy - y)
        ss = math.hypot(*vel[sy, sx])
        dz = 0.0 if depth[sy, sx] == depth[y, x] else depth[sy, sx] - depth[y, x]
        front = np.clip(1 - dz / z_ext, 0, 1)
        back = np.clip(1 + dz / z_ext, 0, 1)

        def cone(s):
            return np.clip(1 - d / max(s, eps), 0, 1)

        def cyl(s):
            e0, e1 = 0.95 * s, 1.05 * s
            if e1 <= e0:
                return 1.0 - float(d >= e0)
            u = np.clip((d - e0) / (e1 - e0), 0, 1)
            return 1.0 - u * u * (3 - 2 * u)

        weights.append(front * cone(ss) + back * cone(sp) + 2 * cyl(ss) * cyl(sp))
        samples.append((sx, sy))
    w = np.array(weights)
    c = sum(wi * color[sy, sx] for wi, (sx, sy) in zip(w, samples)) / w.sum()
    a = sum(wi for wi, (sx, sy) in zip(w, samples) if ids[sy, sx] == ids[y, x]) / w.sum()
    return c, a


def moving_square(W=40, H=24, v=(6.0, 2.0)):
    rng = np.random.default_rng(3)
    color = rng.uniform(0, 1, (H, W, 3))
    depth = np.full((H, W), 5.0)
    ids = np.full((H, W), 2)
    vel = np.zeros((H, W, 2))
    depth[6:16, 8:20] = 1.0
    ids[6:16, 8:20] = 1
    vel[6:16, 8:20] = v
    return color, depth, vel, ids


def test_blur_matches_line_oracle():
    color, depth, vel, ids = moving_square()
    nm = neighbor_max(tile_max(vel, CFG.tile_size))
    out = blur_filter(color, depth, vel, ids, nm, CFG)
    H, W = depth.shape
    for y in range(H):
        for x in range(W):
            c, a = gather_oracle(color, depth, vel, ids, nm.velocity, CFG.tile_size,
                                 CFG.sample_count, CFG.min_speed, CFG.z_extent, x, y)
            np.testing.assert_allclose(out.color[y, x], c, atol=1e-6)
            assert out.alpha[y, x] == pytest.approx(a, abs=1e-6)


def test_blur_static_is_identity():
    color, depth, _, ids = moving_square()
    vel = np.zeros(depth.shape + (2,))
    out = blur_filter(color, depth, vel, ids, neighbor_max(tile_max(vel, 8)), CFG)
    assert np.array_equal(out.color, color)
    assert np.all(out.alpha == 1.0)


def test_blur_constant_color_preserved():
    _, depth, vel, ids = moving_square()
    color = np.broadcast_to(np.array([0.3, 0.6, 0.9]), depth.shape + (3,))
    out = blur_filter(color, depth, vel, ids, neighbor_max(tile_max(vel, 8)), CFG)
    np.testing.assert_allclose(out.color, color, atol=1e-12)


def test_blur_convex_and_deterministic():
    color, depth, vel, ids = moving_square()
    nm = neighbor_max(tile_max(vel, 8))
    a = blur_filter(color, depth, vel, ids, nm, CFG)
    b = blur_filter(color, depth, vel, ids, nm, CFG)
    assert np.array_equal(a.color, b.color) and np.array_equal(a.alpha, b.alpha)
    assert a.color.min() >= color.min() - 1e-12 and a.color.max() <= color.max() + 1e-12
    assert np.all((a.alpha >= 0) & (a.alpha <= 1))
    moved = np.abs(a.color - color).max(-1) > 1e-9
    assert moved[6:16, 8:20].any()


def test_blur_alpha_reference_plane():
    color, depth, vel, ids = moving_square()
    nm = neighbor_max(tile_max(vel, 8))
    # every sample matches a constant reference id
    out = blur_filter(color, depth, vel, np.ones_like(ids), nm, CFG,
                      fg_id_reference=np.ones_like(ids))
    np.testing.assert_allclose(out.alpha, 1.0)
    none = blur_filter(color, depth, vel, ids, nm, CFG, fg_id_reference=np.full_like(ids, 9))
    moving = np.repeat(np.repeat(nm.velocity.any(-1), 8, 0), 8, 1)[:24, :40]
    assert np.all(none.alpha[moving] == 0.0)
    assert np.all(none.alpha[~moving] == 1.0)  # static tiles pass through


def test_blur_requires_resolved_z_extent():
    color, depth, vel, ids = moving_square()
    with pytest.raises(ValueError):
        blur_filter(color, depth, vel, ids, neighbor_max(tile_max(vel, 8)), RenderConfig())


# --- composite -------------------------------------------------------------

def test_composite_examples():
    H, W = 2, 3
    fg = BlurLayer(np.full((H, W, 3), 0.8), np.array([[1.0, 0.5, 0.0], [0.25, 0.5, 0.5]]))
    bg = BlurLayer(np.full((H, W, 3), 0.2), np.zeros((H, W)))
    bits = np.array([[True, True, True], [True, False, False]])
    out = composite(fg, bg, BitMask(bits))
    np.testing.assert_allclose(out[..., 0], [[0.8, 0.5, 0.2], [0.35, 0.8, 0.8]])
    assert np.array_equal(composite(fg, bg, BitMask(np.zeros((H, W), bool))), fg.color)
