"""Ray mask construction: displacement test, Sobel edge mask, range check.

All screen-space lookups round to the nearest pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = ["BitMask", "candidate_mask", "edge_mask", "edge_response", "range_check",
           "build_ray_mask", "RayMaskStages", "build_ray_mask_stages"]


@dataclass(frozen=True, eq=False)
class BitMask:
    bits: np.ndarray  # (H, W) bool

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @classmethod
    def empty(cls, height, width) -> "BitMask":
        return cls(np.zeros((height, width), bool))

    def __eq__(self, other):
        if not isinstance(other, BitMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    __hash__ = None  # type: ignore[assignment]


def _nearest(a):
    return np.floor(a + 0.5).astype(np.int64)


def _moving(g, cfg):
    return np.hypot(g.velocity[..., 0], g.velocity[..., 1]) > cfg.min_speed


def candidate_mask(g, cfg) -> BitMask:
    """Pixels shallower than, and of a different mesh than, their displaced position."""
    H, W = g.depth.shape
    ys, xs = np.mgrid[0:H, 0:W]
    qx = _nearest(xs + g.velocity[..., 0])
    qy = _nearest(ys + g.velocity[..., 1])
    inb = (qx >= 0) & (qx < W) & (qy >= 0) & (qy < H)
    qxc = np.clip(qx, 0, W - 1)
    qyc = np.clip(qy, 0, H - 1)
    d = g.depth
    dq = d[qyc, qxc]
    with np.errstate(invalid="ignore"):
        thresh = np.maximum(cfg.depth_delta_abs, cfg.depth_delta_rel * d)
        deeper = (dq - d) > thresh
    bits = _moving(g, cfg) & inb & deeper & (g.mesh_id[qyc, qxc] != g.mesh_id) & np.isfinite(d)
    return BitMask(bits)


def _sobel_mag(plane):
    gx = ndimage.sobel(plane, axis=1, mode="nearest")
    gy = ndimage.sobel(plane, axis=0, mode="nearest")
    return np.hypot(gx, gy)


def edge_response(g, cfg) -> np.ndarray:
    """Max Sobel gradient magnitude over normalized depth and the normal components."""
    scale = cfg.depth_scale
    if scale is None:
        raise ValueError("cfg.depth_scale is unresolved; call cfg.resolved(scene)")
    dn = np.minimum(g.depth, scale) / scale
    e = _sobel_mag(dn)
    for c in range(3):
        e = np.maximum(e, _sobel_mag(np.ascontiguousarray(g.normal[..., c])))
    return e


def edge_mask(g, candidates: BitMask, cfg) -> BitMask:
    if candidates.bits.shape != g.depth.shape:
        raise ValueError("candidate mask and G-buffer dimensions differ")
    if not candidates.bits.any():
        return BitMask(np.zeros_like(candidates.bits))
    return BitMask(candidates.bits & (edge_response(g, cfg) > cfg.sobel_threshold))


def range_check(edges: BitMask, g, cfg) -> BitMask:
    """Mark moving pixels whose displacement path crosses an edge pixel."""
    H, W = g.depth.shape
    if edges.bits.shape != (H, W):
        raise ValueError("edge mask and G-buffer dimensions differ")
    out = np.zeros((H, W), bool)
    moving = _moving(g, cfg)
    if not edges.bits.any() or not moving.any():
        return BitMask(out)
    ys, xs = np.nonzero(moving)
    v = g.velocity[ys, xs]
    speed = np.hypot(v[:, 0], v[:, 1])
    n_r = np.clip(np.ceil(speed), 1, cfg.range_check_max).astype(np.int64)
    hit = np.zeros(len(xs), bool)
    for i in range(1, int(n_r.max()) + 1):
        active = (i <= n_r) & ~hit
        if not active.any():
            break
        f = i / n_r[active]
        sx = _nearest(xs[active] + f * v[active, 0])
        sy = _nearest(ys[active] + f * v[active, 1])
        inb = (sx >= 0) & (sx < W) & (sy >= 0) & (sy < H)
        found = np.zeros(len(sx), bool)
        found[inb] = edges.bits[sy[inb], sx[inb]]
        idx = np.flatnonzero(active)
        hit[idx[found]] = True
    out[ys[hit], xs[hit]] = True
    return BitMask(out)


@dataclass(frozen=True, eq=False)
class RayMaskStages:
    candidate: BitMask
    edge: BitMask
    ray: BitMask


def build_ray_mask_stages(g, cfg) -> RayMaskStages:
    cand = candidate_mask(g, cfg)
    edges = edge_mask(g, cand, cfg)
    return RayMaskStages(cand, edges, range_check(edges, g, cfg))


def build_ray_mask(g, cfg) -> BitMask:
    return build_ray_mask_stages(g, cfg).ray
