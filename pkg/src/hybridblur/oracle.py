"""Reference renders and image metrics.

``ground_truth`` is distributed ray tracing over the shutter: one primary
ray per pixel center at each of ``N_t`` stratified shutter times, averaged.
``baseline`` is the gather filter on rasterized colour alone.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from ._kernels import JIT, pack_lights, pixel_ray, shade_point
from .gbuffer import GBuffer, flatten, rasterize
from .postprocess import blur_filter, neighbor_max, tile_max
from .rayreveal import Accel, build_accel_arrays, hit_attributes, trace_closest
from .scene import RenderConfig, Scene

__all__ = ["trace_image", "ground_truth", "baseline", "background_oracle", "psnr",
           "PSNR_CAP"]

PSNR_CAP = 99.0


@numba.njit(parallel=True, **JIT)
def _trace_kernel(cam, W, H, bmin, bmax, left, right, start, count, order, pos, nrm, ids,
                  albedo, emissive, kinds, vecs, intens, ambient, env, acc):
    for y in numba.prange(H):
        p = np.empty(3)
        n = np.empty(3)
        rgb = np.empty(3)
        for x in range(W):
            dx, dy, dz = pixel_ray(cam, x + 0.5, y + 0.5)
            tri, t, u, v = trace_closest(bmin, bmax, left, right, start, count, order, pos, ids,
                                         cam[0], cam[1], cam[2], dx, dy, dz, 0.0, np.inf)
            if tri < 0:
                acc[y, x, 0] += env[0]
                acc[y, x, 1] += env[1]
                acc[y, x, 2] += env[2]
                continue
            hit_attributes(pos, nrm, tri, u, v, cam[0], cam[1], cam[2], dx, dy, dz, t, p, n)
            shade_point(p[0], p[1], p[2], n[0], n[1], n[2], albedo[tri], emissive[tri],
                        kinds, vecs, intens, ambient, rgb)
            acc[y, x, 0] += rgb[0]
            acc[y, x, 1] += rgb[1]
            acc[y, x, 2] += rgb[2]


def _accumulate(scene: Scene, accel: Accel, acc: np.ndarray):
    cam = scene.camera
    tris = accel.tris
    kinds, vecs, intens = pack_lights(scene)
    _trace_kernel(cam.packed(), cam.width, cam.height, accel.bmin, accel.bmax, accel.left,
                  accel.right, accel.start, accel.count, accel.order, tris.positions,
                  tris.normals, tris.mesh_id, tris.albedo, tris.emissive, kinds, vecs, intens,
                  np.asarray(scene.ambient, float), np.asarray(scene.environment_color, float),
                  acc)


def trace_image(scene: Scene, t: float) -> np.ndarray:
    """Ray-traced shaded image with geometry frozen at shutter time ``t``."""
    cam = scene.camera
    acc = np.zeros((cam.height, cam.width, 3))
    _accumulate(scene, build_accel_arrays(flatten(scene, t)), acc)
    return acc


def ground_truth(scene: Scene, cfg: RenderConfig) -> np.ndarray:
    n_t = int(cfg.ground_truth_time_samples)
    if n_t < 1:
        raise ValueError("need at least one shutter time sample")
    cam = scene.camera
    acc = np.zeros((cam.height, cam.width, 3))
    if scene.is_static():
        _accumulate(scene, build_accel_arrays(flatten(scene, 0.5)), acc)
        return acc
    for j in range(n_t):
        t = (j + 0.5) / n_t
        _accumulate(scene, build_accel_arrays(flatten(scene, t)), acc)
    return acc / n_t


def baseline_from_gbuffer(g: GBuffer, cfg: RenderConfig):
    nmax = neighbor_max(tile_max(g.velocity, cfg.tile_size))
    return blur_filter(g.color, g.depth, g.velocity, g.mesh_id, nmax, cfg)


def baseline(scene: Scene, cfg: RenderConfig) -> np.ndarray:
    """Post-process-only motion blur of the rasterized colour."""
    cfg = cfg.resolved(scene)
    return baseline_from_gbuffer(rasterize(scene, cfg), cfg).color


def background_oracle(scene: Scene, exclude_ids, cfg: RenderConfig) -> GBuffer:
    """Rasterize ``scene`` with the listed instances removed."""
    exclude = set(exclude_ids)
    unknown = exclude - scene.mesh_ids
    if unknown:
        raise ValueError(f"unknown mesh ids to exclude: {sorted(unknown)}")
    return rasterize(scene.without(exclude), cfg)


def psnr(a: np.ndarray, b: np.ndarray, mask=None) -> float:
    """PSNR in dB of linear RGB images clamped to [0, 1], capped at 99 dB."""
    a = np.clip(np.asarray(a, float), 0.0, 1.0)
    b = np.clip(np.asarray(b, float), 0.0, 1.0)
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    err = (a - b) ** 2
    if mask is not None:
        bits = mask.bits if hasattr(mask, "bits") else np.asarray(mask, bool)
        if bits.shape != a.shape[:2]:
            raise ValueError("mask dimensions differ from the images")
        if not bits.any():
            raise ValueError("mask is empty")
        err = err[bits]
    mse = float(err.mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))
