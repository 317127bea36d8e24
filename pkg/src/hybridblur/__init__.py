"""Hybrid motion blur: post-process gather filtering plus ray-traced background reveal.

Typical use::

    from hybridblur import load_scene, render_hybrid, ground_truth, psnr

    scene, cfg = load_scene("scene.json")
    frame = render_hybrid(scene, cfg)
    ref = ground_truth(scene, cfg)
    print(psnr(frame.image, ref, frame.masks.ray))
"""

from .gbuffer import GBuffer, luminance, rasterize, shade
from .oracle import background_oracle, baseline, ground_truth, psnr, trace_image
from .pipeline import HybridFrame, RunReport, render_hybrid, render_mode
from .postprocess import BlurLayer, TileMap, blur_filter, composite, neighbor_max, tile_max
from .raymask import BitMask, build_ray_mask, candidate_mask, edge_mask, range_check
from .rayreveal import (Accel, BackgroundBuffer, Hit, Ray, build_accel, closest_hit, reveal,
                        reveal_pass)
from .scene import (Camera, Light, Material, MeshInstance, RenderConfig, Scene, SceneError,
                    Transform, load_scene, pose_at, project, unproject)

__version__ = "0.1.0"
