"""Compiled per-pixel helpers shared by the raster, trace and filter passes.

Everything in here is ``numba.njit`` and works on the flat records produced
by :func:`pack_lights` and :meth:`Camera.packed`.
"""

import math

import numba
import numpy as np

# Skip the TBB layer probe; the installed TBB is too old and only warns.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

JIT = dict(cache=True, error_model="numpy")

LIGHT_DIRECTIONAL = 0
LIGHT_POINT = 1


def pack_lights(scene):
    m = len(scene.lights)
    kinds = np.zeros(m, np.int64)
    vecs = np.zeros((m, 3))
    intens = np.zeros((m, 3))
    for i, light in enumerate(scene.lights):
        kinds[i] = LIGHT_DIRECTIONAL if light.kind == "directional" else LIGHT_POINT
        vecs[i] = light.vector
        intens[i] = light.intensity
    return kinds, vecs, intens


@numba.njit(**JIT)
def luminance3(r, g, b):
    return 0.2126 * r + 0.7152 * g + 0.0722 * b


@numba.njit(**JIT)
def project_point(cam, px, py, pz):
    """Return (x, y, depth, ok) for a world point; ok=False behind the camera."""
    dx = px - cam[0]
    dy = py - cam[1]
    dz = pz - cam[2]
    depth = dx * cam[9] + dy * cam[10] + dz * cam[11]
    if depth <= 1e-6:
        return 0.0, 0.0, depth, False
    cr = dx * cam[3] + dy * cam[4] + dz * cam[5]
    cu = dx * cam[6] + dy * cam[7] + dz * cam[8]
    fp = cam[12]
    return cam[13] * 0.5 + fp * cr / depth, cam[14] * 0.5 - fp * cu / depth, depth, True


@numba.njit(**JIT)
def view_depth(cam, px, py, pz):
    return (px - cam[0]) * cam[9] + (py - cam[1]) * cam[10] + (pz - cam[2]) * cam[11]


@numba.njit(**JIT)
def pixel_ray(cam, sx, sy):
    """Unit world-space direction through screen position (sx, sy)."""
    fp = cam[12]
    a = (sx - cam[13] * 0.5) / fp
    b = -(sy - cam[14] * 0.5) / fp
    dx = cam[9] + a * cam[3] + b * cam[6]
    dy = cam[10] + a * cam[4] + b * cam[7]
    dz = cam[11] + a * cam[5] + b * cam[8]
    n = math.sqrt(dx * dx + dy * dy + dz * dz)
    return dx / n, dy / n, dz / n


@numba.njit(**JIT)
def shade_point(px, py, pz, nx, ny, nz, albedo, emissive, kinds, vecs, intens, ambient, out):
    """Write emissive + albedo * (ambient + sum_l max(0, n.l) I_l att_l) into ``out``."""
    acc0 = ambient[0]
    acc1 = ambient[1]
    acc2 = ambient[2]
    for i in range(kinds.shape[0]):
        if kinds[i] == LIGHT_DIRECTIONAL:
            lx, ly, lz = vecs[i, 0], vecs[i, 1], vecs[i, 2]
            att = 1.0
        else:
            lx = vecs[i, 0] - px
            ly = vecs[i, 1] - py
            lz = vecs[i, 2] - pz
            d2 = lx * lx + ly * ly + lz * lz
            if d2 <= 0.0:
                continue
            d = math.sqrt(d2)
            lx /= d
            ly /= d
            lz /= d
            att = 1.0 / d2
        ndl = nx * lx + ny * ly + nz * lz
        if ndl <= 0.0:
            continue
        s = ndl * att
        acc0 += s * intens[i, 0]
        acc1 += s * intens[i, 1]
        acc2 += s * intens[i, 2]
    out[0] = emissive[0] + albedo[0] * acc0
    out[1] = emissive[1] + albedo[1] * acc1
    out[2] = emissive[2] + albedo[2] * acc2


@numba.njit(**JIT)
def clamp_velocity(vx, vy, k):
    m = math.sqrt(vx * vx + vy * vy)
    if m > k:
        s = k / m
        return vx * s, vy * s
    return vx, vy


@numba.njit(**JIT)
def pixel_hash01(x, y):
    """Deterministic value in [0, 1) from integer pixel coordinates."""
    h = (x * 73856093) ^ (y * 19349663) ^ 0x5BD1E995
    h &= 0xFFFFFFFF
    h ^= h >> 16
    h = (h * 0x7FEB352D) & 0xFFFFFFFF
    h ^= h >> 15
    h = (h * 0x846CA68B) & 0xFFFFFFFF
    h ^= h >> 16
    return h / 4294967296.0
