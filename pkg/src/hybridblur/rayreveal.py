"""BVH ray tracing and the recursive ray-advance that peels foreground surfaces.

A masked pixel's primary ray is re-cast from its latest hit, along the same
direction, until it reaches a surface that reads as a different object
(by shaded luminance, or by mesh id), escapes the scene, or runs out of
advances.  Only the first layer behind the foreground is revealed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numba
import numpy as np

from ._kernels import (JIT, clamp_velocity, luminance3, pack_lights, pixel_ray, project_point,
                       shade_point, view_depth)
from .gbuffer import RASTER_TIME, GBuffer, SceneArrays, flatten
from .raymask import BitMask
from .scene import Material, RenderConfig, Scene

__all__ = ["Ray", "Hit", "Accel", "BackgroundBuffer", "RevealSample", "build_accel",
           "build_accel_arrays", "closest_hit", "reveal", "reveal_pass"]

LEAF_SIZE = 4
ID_MODE_LUMINANCE = 0
ID_MODE_MESH = 1


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = math.inf

    def __post_init__(self):
        d = np.asarray(self.direction, float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        if not 0.0 <= self.t_min < self.t_max:
            raise ValueError("need 0 <= t_min < t_max")
        object.__setattr__(self, "origin", np.asarray(self.origin, float))
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True, eq=False)
class Hit:
    t: float
    point: np.ndarray
    normal: np.ndarray
    mesh_id: int
    material: Material
    triangle: int


@dataclass(frozen=True, eq=False)
class Accel:
    """Binary BVH in depth-first order.

    A node with ``count > 0`` is a leaf owning ``order[start:start+count]``;
    otherwise its children are ``left`` and ``right``.
    """

    bmin: np.ndarray
    bmax: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    tris: SceneArrays

    @property
    def node_count(self) -> int:
        return len(self.count)


@dataclass(frozen=True, eq=False)
class BackgroundBuffer:
    valid: np.ndarray  # (H, W) bool
    color: np.ndarray  # (H, W, 3), black where invalid
    depth: np.ndarray  # (H, W), +inf where invalid
    velocity: np.ndarray  # (H, W, 2), zero where invalid
    mesh_id: np.ndarray  # (H, W) revealed surface id, 0 for escape or invalid
    casts: np.ndarray  # (H, W) rays cast per pixel

    @property
    def rays_cast(self) -> int:
        return int(self.casts.sum())


class RevealSample(NamedTuple):
    color: np.ndarray
    depth: float
    velocity: np.ndarray
    valid: bool
    mesh_id: int
    casts: int


# --------------------------------------------------------------------------
# construction

def build_accel_arrays(arrays: SceneArrays) -> Accel:
    n = len(arrays)
    pos = arrays.positions
    if n == 0:
        z = np.zeros((1, 3))
        return Accel(z, z.copy(), np.full(1, -1, np.int64), np.full(1, -1, np.int64),
                     np.zeros(1, np.int64), np.zeros(1, np.int64), np.zeros(0, np.int64), arrays)
    tmin = pos.min(axis=1)
    tmax = pos.max(axis=1)
    cent = pos.mean(axis=1)
    bmin, bmax, left, right, start, count = [], [], [], [], [], []
    order = []

    def build(idx):
        node = len(count)
        bmin.append(tmin[idx].min(axis=0))
        bmax.append(tmax[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        if len(idx) <= LEAF_SIZE:
            start[node] = len(order)
            count[node] = len(idx)
            order.extend(idx.tolist())
            return node
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        idx = idx[np.argsort(c[:, axis], kind="stable")]
        mid = len(idx) // 2
        left[node] = build(idx[:mid])
        right[node] = build(idx[mid:])
        return node

    build(np.arange(n))
    return Accel(np.array(bmin), np.array(bmax), np.array(left, np.int64),
                 np.array(right, np.int64), np.array(start, np.int64),
                 np.array(count, np.int64), np.array(order, np.int64), arrays)


def build_accel(scene: Scene) -> Accel:
    """Median-split BVH over the scene posed at shutter close (the raster pose)."""
    return build_accel_arrays(flatten(scene, RASTER_TIME))


# --------------------------------------------------------------------------
# traversal

@numba.njit(**JIT)
def _intersect_tri(pos, t, ox, oy, oz, dx, dy, dz):
    """Moller-Trumbore, two-sided.  Returns (hit, t, u, v)."""
    ax, ay, az = pos[t, 0, 0], pos[t, 0, 1], pos[t, 0, 2]
    e1x = pos[t, 1, 0] - ax
    e1y = pos[t, 1, 1] - ay
    e1z = pos[t, 1, 2] - az
    e2x = pos[t, 2, 0] - ax
    e2y = pos[t, 2, 1] - ay
    e2z = pos[t, 2, 2] - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return False, 0.0, 0.0, 0.0
    inv = 1.0 / det
    sx = ox - ax
    sy = oy - ay
    sz = oz - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return False, 0.0, 0.0, 0.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return False, 0.0, 0.0, 0.0
    tt = (e2x * qx + e2y * qy + e2z * qz) * inv
    return True, tt, u, v


@numba.njit(**JIT)
def _slab(bmin, bmax, node, ox, oy, oz, ix, iy, iz, tmin, tmax):
    t0 = (bmin[node, 0] - ox) * ix
    t1 = (bmax[node, 0] - ox) * ix
    lo = min(t0, t1)
    hi = max(t0, t1)
    t0 = (bmin[node, 1] - oy) * iy
    t1 = (bmax[node, 1] - oy) * iy
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    t0 = (bmin[node, 2] - oz) * iz
    t1 = (bmax[node, 2] - oz) * iz
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    # widen a hair so hits lying exactly on a box face are never culled
    pad = 1e-9 * (1.0 + abs(lo) + abs(hi))
    return lo - pad <= hi + pad and hi + pad >= tmin and lo - pad <= tmax, lo


@numba.njit(**JIT)
def _safe_inv(d):
    if abs(d) < 1e-300:
        return 1e300 if d >= 0.0 else -1e300
    return 1.0 / d


@numba.njit(**JIT)
def trace_closest(bmin, bmax, left, right, start, count, order, pos, ids,
                  ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Closest hit with t in (tmin, tmax]; ties go to smaller mesh id, then triangle.

    Returns (triangle, t, u, v) with triangle = -1 on a miss.
    """
    best = -1
    best_t = tmax
    best_u = 0.0
    best_v = 0.0
    if order.shape[0] == 0:
        return best, best_t, best_u, best_v
    ix = _safe_inv(dx)
    iy = _safe_inv(dy)
    iz = _safe_inv(dz)
    stack = np.empty(128, np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        ok, lo = _slab(bmin, bmax, node, ox, oy, oz, ix, iy, iz, tmin, best_t)
        if not ok:
            continue
        if count[node] > 0:
            for j in range(start[node], start[node] + count[node]):
                tri = order[j]
                hit, t, u, v = _intersect_tri(pos, tri, ox, oy, oz, dx, dy, dz)
                if not hit or t <= tmin or t > tmax:
                    continue
                if best < 0 or t < best_t or (t == best_t and (
                        ids[tri] < ids[best] or (ids[tri] == ids[best] and tri < best))):
                    best = tri
                    best_t = t
                    best_u = u
                    best_v = v
        else:
            stack[sp] = left[node]
            stack[sp + 1] = right[node]
            sp += 2
    return best, best_t, best_u, best_v


@numba.njit(**JIT)
def hit_attributes(tris_pos, tris_nrm, tri, u, v, ox, oy, oz, dx, dy, dz, t, out_p, out_n):
    w = 1.0 - u - v
    out_p[0] = ox + t * dx
    out_p[1] = oy + t * dy
    out_p[2] = oz + t * dz
    nx = w * tris_nrm[tri, 0, 0] + u * tris_nrm[tri, 1, 0] + v * tris_nrm[tri, 2, 0]
    ny = w * tris_nrm[tri, 0, 1] + u * tris_nrm[tri, 1, 1] + v * tris_nrm[tri, 2, 1]
    nz = w * tris_nrm[tri, 0, 2] + u * tris_nrm[tri, 1, 2] + v * tris_nrm[tri, 2, 2]
    nl = math.sqrt(nx * nx + ny * ny + nz * nz)
    out_n[0] = nx / nl
    out_n[1] = ny / nl
    out_n[2] = nz / nl


@numba.njit(**JIT)
def _closest_batch(bmin, bmax, left, right, start, count, order, pos, ids, origins, dirs,
                   tmin, tmax, out_tri, out_t):
    for i in range(origins.shape[0]):
        tri, t, _, _ = trace_closest(bmin, bmax, left, right, start, count, order, pos, ids,
                                     origins[i, 0], origins[i, 1], origins[i, 2],
                                     dirs[i, 0], dirs[i, 1], dirs[i, 2], tmin[i], tmax[i])
        out_tri[i] = tri
        out_t[i] = t


def _accel_args(accel: Accel):
    return (accel.bmin, accel.bmax, accel.left, accel.right, accel.start, accel.count,
            accel.order, accel.tris.positions, accel.tris.mesh_id)


def closest_hits(accel: Accel, origins, dirs, t_min=0.0, t_max=math.inf):
    """Vectorized closest-hit query; returns (triangle index or -1, t) arrays."""
    origins = np.ascontiguousarray(origins, float).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, float).reshape(-1, 3)
    n = len(origins)
    tmin = np.broadcast_to(np.asarray(t_min, float), (n,)).copy()
    tmax = np.broadcast_to(np.asarray(t_max, float), (n,)).copy()
    out_tri = np.empty(n, np.int64)
    out_t = np.empty(n)
    _closest_batch(*_accel_args(accel), origins, dirs, tmin, tmax, out_tri, out_t)
    return out_tri, out_t


def closest_hit(accel: Accel, ray: Ray) -> Optional[Hit]:
    o, d = ray.origin, ray.direction
    tri, t, u, v = trace_closest(*_accel_args(accel), o[0], o[1], o[2], d[0], d[1], d[2],
                                 float(ray.t_min), float(ray.t_max))
    if tri < 0:
        return None
    p = np.empty(3)
    n = np.empty(3)
    hit_attributes(accel.tris.positions, accel.tris.normals, tri, u, v, o[0], o[1], o[2],
                   d[0], d[1], d[2], t, p, n)
    mat = Material(tuple(accel.tris.albedo[tri]), tuple(accel.tris.emissive[tri]))
    return Hit(float(t), p, n, int(accel.tris.mesh_id[tri]), mat, int(tri))


# --------------------------------------------------------------------------
# reveal

@numba.njit(**JIT)
def _reveal_one(cam, sx, sy, bmin, bmax, left, right, start, count, order, pos, nrm, ref, ids,
                albedo, emissive, kinds, vecs, intens, ambient, env, R, tau_l, eps, id_mode, k,
                out_c):
    """Returns (depth, vx, vy, valid, mesh_id, casts) and writes color into out_c."""
    dx, dy, dz = pixel_ray(cam, sx, sy)
    ox, oy, oz = cam[0], cam[1], cam[2]
    p = np.empty(3)
    n = np.empty(3)
    rgb = np.empty(3)
    tri, t, u, v = trace_closest(bmin, bmax, left, right, start, count, order, pos, ids,
                                 ox, oy, oz, dx, dy, dz, 0.0, np.inf)
    casts = 1
    out_c[:] = 0.0
    if tri < 0:
        return np.inf, 0.0, 0.0, False, 0, casts
    hit_attributes(pos, nrm, tri, u, v, ox, oy, oz, dx, dy, dz, t, p, n)
    shade_point(p[0], p[1], p[2], n[0], n[1], n[2], albedo[tri], emissive[tri],
                kinds, vecs, intens, ambient, rgb)
    l0 = luminance3(rgb[0], rgb[1], rgb[2])
    id0 = ids[tri]
    for _ in range(R):
        ox = p[0] + eps * dx
        oy = p[1] + eps * dy
        oz = p[2] + eps * dz
        tri, t, u, v = trace_closest(bmin, bmax, left, right, start, count, order, pos, ids,
                                     ox, oy, oz, dx, dy, dz, 0.0, np.inf)
        casts += 1
        if tri < 0:
            out_c[0] = env[0]
            out_c[1] = env[1]
            out_c[2] = env[2]
            return np.inf, 0.0, 0.0, True, 0, casts
        hit_attributes(pos, nrm, tri, u, v, ox, oy, oz, dx, dy, dz, t, p, n)
        shade_point(p[0], p[1], p[2], n[0], n[1], n[2], albedo[tri], emissive[tri],
                    kinds, vecs, intens, ambient, rgb)
        if id_mode == ID_MODE_MESH:
            accept = ids[tri] != id0
        else:
            accept = abs(luminance3(rgb[0], rgb[1], rgb[2]) - l0) > tau_l
        if accept:
            w = 1.0 - u - v
            qx = w * ref[tri, 0, 0] + u * ref[tri, 1, 0] + v * ref[tri, 2, 0]
            qy = w * ref[tri, 0, 1] + u * ref[tri, 1, 1] + v * ref[tri, 2, 1]
            qz = w * ref[tri, 0, 2] + u * ref[tri, 1, 2] + v * ref[tri, 2, 2]
            cx, cy, _, ok_c = project_point(cam, p[0], p[1], p[2])
            px_, py_, _, ok_o = project_point(cam, qx, qy, qz)
            vx = 0.0
            vy = 0.0
            if ok_c and ok_o:
                vx, vy = clamp_velocity(cx - px_, cy - py_, k)
            out_c[0] = rgb[0]
            out_c[1] = rgb[1]
            out_c[2] = rgb[2]
            return view_depth(cam, p[0], p[1], p[2]), vx, vy, True, ids[tri], casts
    return np.inf, 0.0, 0.0, False, 0, casts


@numba.njit(parallel=True, **JIT)
def _reveal_batch(cam, px, py, bmin, bmax, left, right, start, count, order, pos, nrm, ref, ids,
                  albedo, emissive, kinds, vecs, intens, ambient, env, R, tau_l, eps, id_mode, k,
                  out_c, out_d, out_v, out_valid, out_id, out_casts):
    for i in numba.prange(px.shape[0]):
        c = np.empty(3)
        d, vx, vy, ok, mid, casts = _reveal_one(
            cam, px[i] + 0.5, py[i] + 0.5, bmin, bmax, left, right, start, count, order,
            pos, nrm, ref, ids, albedo, emissive, kinds, vecs, intens, ambient, env,
            R, tau_l, eps, id_mode, k, c)
        out_c[i, 0] = c[0]
        out_c[i, 1] = c[1]
        out_c[i, 2] = c[2]
        out_d[i] = d
        out_v[i, 0] = vx
        out_v[i, 1] = vy
        out_valid[i] = ok
        out_id[i] = mid
        out_casts[i] = casts


def _reveal_pixels(xs, ys, accel: Accel, scene: Scene, cfg: RenderConfig):
    n = len(xs)
    out_c = np.zeros((n, 3))
    out_d = np.full(n, np.inf)
    out_v = np.zeros((n, 2))
    out_valid = np.zeros(n, np.bool_)
    out_id = np.zeros(n, np.int64)
    out_casts = np.zeros(n, np.int64)
    if n:
        tris = accel.tris
        kinds, vecs, intens = pack_lights(scene)
        _reveal_batch(scene.camera.packed(), np.asarray(xs, np.int64), np.asarray(ys, np.int64),
                      accel.bmin, accel.bmax, accel.left, accel.right, accel.start, accel.count,
                      accel.order, tris.positions, tris.normals, tris.ref_positions,
                      tris.mesh_id, tris.albedo, tris.emissive, kinds, vecs, intens,
                      np.asarray(scene.ambient, float), np.asarray(scene.environment_color, float),
                      int(cfg.max_recursion), float(cfg.luminance_tol), float(cfg.ray_epsilon),
                      ID_MODE_MESH if cfg.id_mode == "mesh" else ID_MODE_LUMINANCE,
                      float(cfg.tile_size), out_c, out_d, out_v, out_valid, out_id, out_casts)
    return out_c, out_d, out_v, out_valid, out_id, out_casts


def reveal(p, g: GBuffer, accel: Accel, scene: Scene, cfg: RenderConfig) -> RevealSample:
    """Reveal the first differing surface behind pixel ``p = (x, y)``.

    An escape to the environment is a valid reveal.  ``valid=False`` means
    either the primary ray missed (a raster/trace silhouette disagreement)
    or ``cfg.max_recursion`` advances found nothing different.
    """
    x, y = int(p[0]), int(p[1])
    if g.mesh_id[y, x] <= 0:
        raise ValueError(f"pixel {p} is not covered by geometry")
    c, d, v, ok, mid, casts = _reveal_pixels([x], [y], accel, scene, cfg)
    return RevealSample(c[0], float(d[0]), v[0], bool(ok[0]), int(mid[0]), int(casts[0]))


def reveal_pass(mask: BitMask, g: GBuffer, accel: Accel, scene: Scene,
                cfg: RenderConfig) -> BackgroundBuffer:
    H, W = mask.bits.shape
    if (H, W) != g.depth.shape:
        raise ValueError("mask and G-buffer dimensions differ")
    ys, xs = np.nonzero(mask.bits & (g.mesh_id > 0))
    c, d, v, ok, mid, casts = _reveal_pixels(xs, ys, accel, scene, cfg)
    bg = BackgroundBuffer(np.zeros((H, W), bool), np.zeros((H, W, 3)), np.full((H, W), np.inf),
                          np.zeros((H, W, 2)), np.zeros((H, W), np.int32),
                          np.zeros((H, W), np.int64))
    # invalid entries keep the sentinels
    bg.valid[ys, xs] = ok
    bg.color[ys[ok], xs[ok]] = c[ok]
    bg.depth[ys[ok], xs[ok]] = d[ok]
    bg.velocity[ys[ok], xs[ok]] = v[ok]
    bg.mesh_id[ys[ok], xs[ok]] = mid[ok]
    bg.casts[ys, xs] = casts
    return bg
