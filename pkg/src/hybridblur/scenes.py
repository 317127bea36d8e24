"""Ready-made test scenes."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .scene import (Camera, Light, Material, MeshInstance, RenderConfig, Scene, Transform,
                    checker_plane_mesh, quad_mesh)

__all__ = ["canonical_scene", "FOREGROUND_ID", "BACKGROUND_ID"]

FOREGROUND_ID = 1
BACKGROUND_ID = 2


def canonical_scene(speed_px: float = 30.0, size: int = 512, *, cells: int = 28,
                    static: bool = False, tile_size: int = 32):
    """Foreground quad at depth 1 sliding along +x over a checkerboard at depth 5.

    ``speed_px`` is the screen displacement of the quad over the exposure.
    Returns ``(scene, cfg)``.
    """
    vfov = math.radians(60.0)
    cam = Camera((0.0, 0.0, 0.0), (0.0, 0.0, -1.0), (0.0, 1.0, 0.0), vfov, (size, size))
    shift = 0.0 if static else speed_px / cam.focal_px  # scene units at depth 1
    pos, nrm = quad_mesh()
    fg = MeshInstance(
        FOREGROUND_ID, pos, nrm, Material((0.9, 0.35, 0.1)),
        pose_open=Transform((-0.5 * shift, 0.0, -1.0), scale=(0.5, 0.5, 1.0)),
        pose_close=Transform((0.5 * shift, 0.0, -1.0), scale=(0.5, 0.5, 1.0)))
    cpos, cnrm, calb = checker_plane_mesh(cells, (0.85, 0.85, 0.85), (0.12, 0.12, 0.12))
    plane_pose = Transform((0.0, 0.0, -5.0), scale=(7.0, 7.0, 1.0))
    bg = MeshInstance(BACKGROUND_ID, cpos, cnrm, Material((0.85, 0.85, 0.85)),
                      plane_pose, plane_pose, calb)
    d = np.array([0.3, 0.4, 1.0])
    d /= np.linalg.norm(d)
    light = Light("directional", tuple(d), (0.9, 0.9, 0.9))
    scene = Scene((fg, bg), cam, (light,), environment_color=(0.2, 0.3, 0.5),
                  ambient=(0.1, 0.1, 0.1))
    cfg = RenderConfig(tile_size=tile_size)
    return scene, cfg


def with_config(cfg: RenderConfig, **changes) -> RenderConfig:
    return dataclasses.replace(cfg, **changes)
