"""Tile-dilate pass, gather blur filter and final composite.

The gather filter reads ``S`` samples along the dominant neighborhood
velocity, from the pixel itself forward to one full displacement: the
target pixel sits at the start of its sampling range rather than in the
middle.  Sample weights use the usual cone/cylinder reconstruction with a
soft depth classification into "sample in front" and "sample behind".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ._kernels import JIT, pixel_hash01

__all__ = ["TileMap", "BlurLayer", "tile_max", "neighbor_max", "blur_filter",
           "composite", "background_planes"]


@dataclass(frozen=True, eq=False)
class TileMap:
    velocity: np.ndarray  # (tiles_y, tiles_x, 2)
    tile_size: int

    @property
    def tiles_x(self) -> int:
        return self.velocity.shape[1]

    @property
    def tiles_y(self) -> int:
        return self.velocity.shape[0]


@dataclass(frozen=True, eq=False)
class BlurLayer:
    color: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W) same-mesh weight fraction


@numba.njit(**JIT)
def _tile_max_kernel(vel, k, out):
    H, W = vel.shape[0], vel.shape[1]
    best = np.full((out.shape[0], out.shape[1]), -1.0)
    for y in range(H):
        ty = y // k
        for x in range(W):
            tx = x // k
            m = vel[y, x, 0] * vel[y, x, 0] + vel[y, x, 1] * vel[y, x, 1]
            if m > best[ty, tx]:
                best[ty, tx] = m
                out[ty, tx, 0] = vel[y, x, 0]
                out[ty, tx, 1] = vel[y, x, 1]


def tile_max(velocity: np.ndarray, k: int) -> TileMap:
    """Largest-magnitude velocity per ``k`` x ``k`` tile (first pixel wins ties)."""
    if k < 1:
        raise ValueError("tile size must be >= 1")
    H, W = velocity.shape[:2]
    out = np.zeros((-(-H // k), -(-W // k), 2))
    _tile_max_kernel(np.ascontiguousarray(velocity, dtype=float), int(k), out)
    return TileMap(out, int(k))


@numba.njit(**JIT)
def _neighbor_max_kernel(tv, out):
    TY, TX = tv.shape[0], tv.shape[1]
    for ty in range(TY):
        for tx in range(TX):
            best = -1.0
            for dy in range(-1, 2):
                sy = min(max(ty + dy, 0), TY - 1)
                for dx in range(-1, 2):
                    sx = min(max(tx + dx, 0), TX - 1)
                    m = tv[sy, sx, 0] * tv[sy, sx, 0] + tv[sy, sx, 1] * tv[sy, sx, 1]
                    if m > best:
                        best = m
                        out[ty, tx, 0] = tv[sy, sx, 0]
                        out[ty, tx, 1] = tv[sy, sx, 1]


def neighbor_max(t: TileMap) -> TileMap:
    """Dilate a tile map over its edge-clamped 3 x 3 neighborhood."""
    out = np.zeros_like(t.velocity)
    _neighbor_max_kernel(np.ascontiguousarray(t.velocity), out)
    return TileMap(out, t.tile_size)


@numba.njit(**JIT)
def _cone(d, speed, eps):
    return min(max(1.0 - d / max(speed, eps), 0.0), 1.0)


@numba.njit(**JIT)
def _smoothstep(e0, e1, x):
    if e1 <= e0:
        return 0.0 if x < e0 else 1.0
    s = min(max((x - e0) / (e1 - e0), 0.0), 1.0)
    return s * s * (3.0 - 2.0 * s)


@numba.njit(**JIT)
def _cyl(d, speed):
    return 1.0 - _smoothstep(0.95 * speed, 1.05 * speed, d)


@numba.njit(**JIT)
def _depth_diff(a, b):
    # inf - inf: two environment samples sit at the same depth
    if a == b:
        return 0.0
    return a - b


@numba.njit(parallel=True, **JIT)
def _blur_kernel(color, depth, vel, ids, fg_ref, nmax, k, S, eps, z_ext, out_c, out_a):
    H, W = depth.shape
    for y in numba.prange(H):
        for x in range(W):
            nvx = nmax[y // k, x // k, 0]
            nvy = nmax[y // k, x // k, 1]
            if math.sqrt(nvx * nvx + nvy * nvy) < eps:
                out_c[y, x, 0] = color[y, x, 0]
                out_c[y, x, 1] = color[y, x, 1]
                out_c[y, x, 2] = color[y, x, 2]
                out_a[y, x] = 1.0
                continue
            zp = depth[y, x]
            sp = math.sqrt(vel[y, x, 0] ** 2 + vel[y, x, 1] ** 2)
            ref = fg_ref[y, x]
            w0 = S / (k * max(sp, eps))
            sw = w0
            sa = w0 if ids[y, x] == ref else 0.0
            c0 = w0 * color[y, x, 0]
            c1 = w0 * color[y, x, 1]
            c2 = w0 * color[y, x, 2]
            xi = pixel_hash01(x, y)
            for i in range(1, S + 1):
                ti = (i - xi) / S
                sx = int(math.floor(x + ti * nvx + 0.5))
                sy = int(math.floor(y + ti * nvy + 0.5))
                if sx < 0 or sx >= W or sy < 0 or sy >= H:
                    continue
                d = math.sqrt(float((sx - x) ** 2 + (sy - y) ** 2))
                zs = depth[sy, sx]
                ss = math.sqrt(vel[sy, sx, 0] ** 2 + vel[sy, sx, 1] ** 2)
                front = min(max(1.0 - _depth_diff(zs, zp) / z_ext, 0.0), 1.0)
                back = min(max(1.0 - _depth_diff(zp, zs) / z_ext, 0.0), 1.0)
                w = (front * _cone(d, ss, eps) + back * _cone(d, sp, eps)
                     + 2.0 * _cyl(d, ss) * _cyl(d, sp))
                sw += w
                c0 += w * color[sy, sx, 0]
                c1 += w * color[sy, sx, 1]
                c2 += w * color[sy, sx, 2]
                if ids[sy, sx] == ref:
                    sa += w
            out_c[y, x, 0] = c0 / sw
            out_c[y, x, 1] = c1 / sw
            out_c[y, x, 2] = c2 / sw
            out_a[y, x] = min(sa / sw, 1.0)


def blur_filter(color, depth, velocity, ids, nmax: TileMap, cfg, fg_id_reference=None) -> BlurLayer:
    """Gather-blur one layer.

    Parameters
    ----------
    color, depth, velocity, ids : ndarray
        Layer planes of shape (H, W, 3), (H, W), (H, W, 2) and (H, W).
    nmax : TileMap
        Dilated tile velocities bounding the gather range.
    cfg : RenderConfig
        Needs ``sample_count``, ``min_speed`` and a resolved ``z_extent``.
    fg_id_reference : ndarray, optional
        Id plane defining which samples count toward coverage alpha;
        defaults to ``ids`` itself.
    """
    if cfg.z_extent is None:
        raise ValueError("cfg.z_extent is unresolved; call cfg.resolved(scene)")
    H, W = depth.shape
    if fg_id_reference is None:
        fg_id_reference = ids
    out_c = np.empty((H, W, 3))
    out_a = np.empty((H, W))
    _blur_kernel(np.ascontiguousarray(color, float), np.ascontiguousarray(depth, float),
                 np.ascontiguousarray(velocity, float), np.ascontiguousarray(ids, np.int64),
                 np.ascontiguousarray(fg_id_reference, np.int64), nmax.velocity,
                 int(nmax.tile_size), int(cfg.sample_count), float(cfg.min_speed),
                 float(cfg.z_extent), out_c, out_a)
    return BlurLayer(out_c, out_a)


def background_planes(bg, g):
    """Planes for blurring the revealed layer.

    Invalid background pixels fall back to the raster planes (neighbor
    approximation).  The returned tiling velocity is the background's own,
    zero where invalid, so static backgrounds stay sharp.
    """
    v = bg.valid
    color = np.where(v[..., None], bg.color, g.color)
    depth = np.where(v, bg.depth, g.depth)
    velocity = np.where(v[..., None], bg.velocity, g.velocity)
    ids = np.where(v, bg.mesh_id, g.mesh_id)
    tile_velocity = np.where(v[..., None], bg.velocity, 0.0)
    return color, depth, velocity, ids, tile_velocity


def composite(raster_blur: BlurLayer, bg_blur: BlurLayer, mask) -> np.ndarray:
    """Blend the foreground layer over the revealed background inside the mask."""
    bits = mask.bits if hasattr(mask, "bits") else np.asarray(mask, bool)
    a = raster_blur.alpha[..., None]
    mixed = a * raster_blur.color + (1.0 - a) * bg_blur.color
    return np.where(bits[..., None], mixed, raster_blur.color)
