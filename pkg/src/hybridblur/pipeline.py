"""End-to-end frame rendering with per-pass timing."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .gbuffer import GBuffer, rasterize
from .oracle import ground_truth
from .postprocess import (BlurLayer, background_planes, blur_filter, composite, neighbor_max,
                          tile_max)
from .raymask import RayMaskStages, build_ray_mask_stages
from .rayreveal import BackgroundBuffer, build_accel, reveal_pass
from .scene import RenderConfig, Scene

__all__ = ["RunReport", "HybridFrame", "render_hybrid", "render_mode", "PASSES"]

PASSES = ("raster", "mask", "accel_build", "reveal", "tile", "filter_raster", "filter_bg",
          "composite")


@dataclass
class RunReport:
    mode: str
    times_ms: dict = field(default_factory=lambda: {p: 0.0 for p in PASSES})
    masked_pixels: int = 0
    rays_cast: int = 0
    outputs: dict = field(default_factory=dict)

    def to_dict(self, timing=True) -> dict:
        d = {"mode": self.mode, "masked_pixels": self.masked_pixels,
             "rays_cast": self.rays_cast, "outputs": dict(self.outputs)}
        if timing:
            d["times_ms"] = {k: round(v, 3) for k, v in self.times_ms.items()}
        return d


class _Timer:
    def __init__(self, report, name):
        self.report, self.name = report, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report.times_ms[self.name] += 1e3 * (time.perf_counter() - self.t0)


@dataclass(frozen=True, eq=False)
class HybridFrame:
    image: np.ndarray
    gbuffer: GBuffer
    masks: RayMaskStages
    background: BackgroundBuffer
    raster_layer: BlurLayer
    background_layer: BlurLayer
    report: RunReport


def render_hybrid(scene: Scene, cfg: RenderConfig) -> HybridFrame:
    """Raster, mask, reveal, blur both layers, composite."""
    cfg = cfg.resolved(scene)
    rep = RunReport("hybrid")
    with _Timer(rep, "raster"):
        g = rasterize(scene, cfg)
    with _Timer(rep, "mask"):
        masks = build_ray_mask_stages(g, cfg)
    with _Timer(rep, "accel_build"):
        accel = build_accel(scene)
    with _Timer(rep, "reveal"):
        bg = reveal_pass(masks.ray, g, accel, scene, cfg)
    bcol, bdep, bvel, bids, btile = background_planes(bg, g)
    with _Timer(rep, "tile"):
        nmax_raster = neighbor_max(tile_max(g.velocity, cfg.tile_size))
        nmax_bg = neighbor_max(tile_max(btile, cfg.tile_size))
    with _Timer(rep, "filter_raster"):
        raster_layer = blur_filter(g.color, g.depth, g.velocity, g.mesh_id, nmax_raster, cfg)
    with _Timer(rep, "filter_bg"):
        bg_layer = blur_filter(bcol, bdep, bvel, bids, nmax_bg, cfg, fg_id_reference=bids)
    with _Timer(rep, "composite"):
        image = composite(raster_layer, bg_layer, masks.ray)
    rep.masked_pixels = masks.ray.count
    rep.rays_cast = bg.rays_cast
    return HybridFrame(image, g, masks, bg, raster_layer, bg_layer, rep)


def render_mode(scene: Scene, cfg: RenderConfig, mode: str):
    """Render one frame; returns (image, report, hybrid frame or None)."""
    if mode == "hybrid":
        frame = render_hybrid(scene, cfg)
        return frame.image, frame.report, frame
    cfg = cfg.resolved(scene)
    rep = RunReport(mode)
    if mode == "baseline":
        with _Timer(rep, "raster"):
            g = rasterize(scene, cfg)
        with _Timer(rep, "tile"):
            nmax = neighbor_max(tile_max(g.velocity, cfg.tile_size))
        with _Timer(rep, "filter_raster"):
            image = blur_filter(g.color, g.depth, g.velocity, g.mesh_id, nmax, cfg).color
        return image, rep, None
    if mode == "groundtruth":
        t0 = time.perf_counter()
        image = ground_truth(scene, cfg)
        rep.times_ms["ground_truth"] = 1e3 * (time.perf_counter() - t0)
        return image, rep, None
    raise ValueError(f"unknown mode {mode!r}")

