"""Software rasterizer producing the deferred-shading G-buffer.

Geometry is posed at :data:`RASTER_TIME` (shutter close).  Per-pixel
velocity is the screen displacement of the visible surface point from its
shutter-open position to its shutter-close position, so a gather along
``+velocity`` walks over the points that covered the pixel earlier in the
exposure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ._kernels import JIT, clamp_velocity, pack_lights, project_point, shade_point
from .scene import Material, Scene

__all__ = ["RASTER_TIME", "GBuffer", "SceneArrays", "flatten", "rasterize", "shade",
           "luminance"]

RASTER_TIME = 1.0
NEAR = 1e-4


@dataclass(frozen=True, eq=False)
class GBuffer:
    """Per-pixel planes, row 0 at the top of the image.

    ``depth`` is +inf, ``normal`` zero and ``mesh_id`` 0 where no geometry
    covers the pixel center.
    """

    depth: np.ndarray  # (H, W)
    normal: np.ndarray  # (H, W, 3)
    mesh_id: np.ndarray  # (H, W) int32
    velocity: np.ndarray  # (H, W, 2) pixels over the whole exposure
    albedo: np.ndarray  # (H, W, 3)
    color: np.ndarray  # (H, W, 3)

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def speed(self) -> np.ndarray:
        return np.hypot(self.velocity[..., 0], self.velocity[..., 1])


@dataclass(frozen=True, eq=False)
class SceneArrays:
    """Flattened triangle soup of a scene posed at one shutter time."""

    positions: np.ndarray  # (n, 3, 3) world space at the pose time
    normals: np.ndarray  # (n, 3, 3)
    ref_positions: np.ndarray  # (n, 3, 3) world space at shutter open
    mesh_id: np.ndarray  # (n,) int64
    albedo: np.ndarray  # (n, 3)
    emissive: np.ndarray  # (n, 3)

    def __len__(self):
        return len(self.mesh_id)


def flatten(scene: Scene, t: float = RASTER_TIME) -> SceneArrays:
    pos, nrm, ref, ids, alb, emi = [], [], [], [], [], []
    for inst in scene.instances:
        n = len(inst.positions)
        pos.append(inst.world_positions(t))
        nrm.append(inst.world_normals(t))
        ref.append(inst.world_positions(0.0))
        ids.append(np.full(n, inst.mesh_id, np.int64))
        alb.append(inst.albedos())
        emi.append(np.tile(np.asarray(inst.material.emissive, float), (n, 1)))
    if not pos:
        e = np.zeros((0, 3, 3))
        return SceneArrays(e, e.copy(), e.copy(), np.zeros(0, np.int64), np.zeros((0, 3)),
                           np.zeros((0, 3)))
    return SceneArrays(np.concatenate(pos), np.concatenate(nrm), np.concatenate(ref),
                       np.concatenate(ids), np.concatenate(alb), np.concatenate(emi))


def luminance(c) -> float:
    """Rec. 709 luma of a linear RGB triple (or of the last axis of an array)."""
    c = np.asarray(c, dtype=float)
    return 0.2126 * c[..., 0] + 0.7152 * c[..., 1] + 0.0722 * c[..., 2]


def shade(point, normal, material: Material, scene: Scene) -> np.ndarray:
    kinds, vecs, intens = pack_lights(scene)
    out = np.zeros(3)
    p = np.asarray(point, float)
    n = np.asarray(normal, float)
    shade_point(p[0], p[1], p[2], n[0], n[1], n[2], np.asarray(material.albedo, float),
                np.asarray(material.emissive, float), kinds, vecs, intens,
                np.asarray(scene.ambient, float), out)
    return out


# --------------------------------------------------------------------------
# compiled raster path

@numba.njit(**JIT)
def _clip_and_setup(cam_pos, right, up, fwd, fp, W, H, positions):
    """Clip triangles to the near plane and project the pieces.

    Each output piece stores, per vertex, its barycentric coordinates with
    respect to the source triangle so attributes can be reconstructed later.
    """
    n = positions.shape[0]
    src = np.empty(2 * n, np.int64)
    bary = np.empty((2 * n, 3, 3))
    scr = np.empty((2 * n, 3, 2))
    invz = np.empty((2 * n, 3))
    m = 0
    cz = np.empty(3)
    poly_b = np.empty((4, 3))
    poly_z = np.empty(4)
    for t in range(n):
        for v in range(3):
            cz[v] = ((positions[t, v, 0] - cam_pos[0]) * fwd[0] + (positions[t, v, 1] - cam_pos[1]) * fwd[1]
                     + (positions[t, v, 2] - cam_pos[2]) * fwd[2])
        # Sutherland-Hodgman against depth >= NEAR in barycentric space
        cnt = 0
        for v in range(3):
            w = (v + 1) % 3
            inside_v = cz[v] >= NEAR
            inside_w = cz[w] >= NEAR
            if inside_v:
                for c in range(3):
                    poly_b[cnt, c] = 1.0 if c == v else 0.0
                poly_z[cnt] = cz[v]
                cnt += 1
            if inside_v != inside_w:
                s = (NEAR - cz[v]) / (cz[w] - cz[v])
                for c in range(3):
                    bv = 1.0 if c == v else 0.0
                    bw = 1.0 if c == w else 0.0
                    poly_b[cnt, c] = bv + s * (bw - bv)
                poly_z[cnt] = NEAR
                cnt += 1
        if cnt < 3:
            continue
        for k in range(1, cnt - 1):
            idx = (0, k, k + 1)
            for j in range(3):
                pv = idx[j]
                px = 0.0
                py = 0.0
                pz = 0.0
                for c in range(3):
                    px += poly_b[pv, c] * positions[t, c, 0]
                    py += poly_b[pv, c] * positions[t, c, 1]
                    pz += poly_b[pv, c] * positions[t, c, 2]
                dx = px - cam_pos[0]
                dy = py - cam_pos[1]
                dz = pz - cam_pos[2]
                z = poly_z[pv]
                scr[m, j, 0] = W * 0.5 + fp * (dx * right[0] + dy * right[1] + dz * right[2]) / z
                scr[m, j, 1] = H * 0.5 - fp * (dx * up[0] + dy * up[1] + dz * up[2]) / z
                invz[m, j] = 1.0 / z
                for c in range(3):
                    bary[m, j, c] = poly_b[pv, c]
            area = ((scr[m, 1, 0] - scr[m, 0, 0]) * (scr[m, 2, 1] - scr[m, 0, 1])
                    - (scr[m, 1, 1] - scr[m, 0, 1]) * (scr[m, 2, 0] - scr[m, 0, 0]))
            if area == 0.0 or not math.isfinite(area):
                continue  # degenerate triangles are skipped
            src[m] = t
            m += 1
    return src[:m], bary[:m], scr[:m], invz[:m]


@numba.njit(parallel=True, **JIT)
def _raster_kernel(cam, W, H, src, bary, scr, invz, tri_ids, positions, normals, ref_pos,
                   albedo, emissive, kinds, vecs, intens, ambient, env, k,
                   depth, normal, mesh_id, velocity, alb_out, color):
    m = src.shape[0]
    ymin = np.empty(m)
    ymax = np.empty(m)
    for i in range(m):
        ymin[i] = min(scr[i, 0, 1], scr[i, 1, 1], scr[i, 2, 1])
        ymax[i] = max(scr[i, 0, 1], scr[i, 1, 1], scr[i, 2, 1])
    for y in numba.prange(H):
        sy = y + 0.5
        zrow = np.full(W, np.inf)
        idrow = np.zeros(W, np.int64)
        piece = np.full(W, -1, np.int64)
        lam = np.zeros((W, 3))
        for i in range(m):
            if sy < ymin[i] or sy > ymax[i]:
                continue
            x0, y0 = scr[i, 0, 0], scr[i, 0, 1]
            x1, y1 = scr[i, 1, 0], scr[i, 1, 1]
            x2, y2 = scr[i, 2, 0], scr[i, 2, 1]
            area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            xlo = max(0, int(math.floor(min(x0, x1, x2) - 0.5)))
            xhi = min(W - 1, int(math.ceil(max(x0, x1, x2) - 0.5)))
            tid = tri_ids[src[i]]
            for x in range(xlo, xhi + 1):
                sx = x + 0.5
                w0 = ((x2 - x1) * (sy - y1) - (y2 - y1) * (sx - x1)) / area
                w1 = ((x0 - x2) * (sy - y2) - (y0 - y2) * (sx - x2)) / area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                iz = w0 * invz[i, 0] + w1 * invz[i, 1] + w2 * invz[i, 2]
                z = 1.0 / iz
                if z < zrow[x] or (z == zrow[x] and tid < idrow[x]):
                    zrow[x] = z
                    idrow[x] = tid
                    piece[x] = i
                    lam[x, 0] = w0 * invz[i, 0] * z
                    lam[x, 1] = w1 * invz[i, 1] * z
                    lam[x, 2] = w2 * invz[i, 2] * z
        rgb = np.empty(3)
        for x in range(W):
            i = piece[x]
            if i < 0:
                color[y, x, 0] = env[0]
                color[y, x, 1] = env[1]
                color[y, x, 2] = env[2]
                continue
            t = src[i]
            b = np.zeros(3)
            for j in range(3):
                for c in range(3):
                    b[c] += lam[x, j] * bary[i, j, c]
            p = np.zeros(3)
            q = np.zeros(3)
            nn = np.zeros(3)
            for c in range(3):
                for a in range(3):
                    p[a] += b[c] * positions[t, c, a]
                    q[a] += b[c] * ref_pos[t, c, a]
                    nn[a] += b[c] * normals[t, c, a]
            nl = math.sqrt(nn[0] * nn[0] + nn[1] * nn[1] + nn[2] * nn[2])
            for a in range(3):
                nn[a] /= nl
            cx, cy, _, ok_c = project_point(cam, p[0], p[1], p[2])
            ox, oy, _, ok_o = project_point(cam, q[0], q[1], q[2])
            vx = 0.0
            vy = 0.0
            if ok_c and ok_o:
                vx, vy = clamp_velocity(cx - ox, cy - oy, k)
            shade_point(p[0], p[1], p[2], nn[0], nn[1], nn[2], albedo[t], emissive[t],
                        kinds, vecs, intens, ambient, rgb)
            depth[y, x] = zrow[x]
            mesh_id[y, x] = tri_ids[t]
            velocity[y, x, 0] = vx
            velocity[y, x, 1] = vy
            for a in range(3):
                normal[y, x, a] = nn[a]
                alb_out[y, x, a] = albedo[t, a]
                color[y, x, a] = rgb[a]


def rasterize_arrays(scene: Scene, arrays: SceneArrays, tile_size: float) -> GBuffer:
    cam = scene.camera
    W, H = cam.width, cam.height
    depth = np.full((H, W), np.inf)
    normal = np.zeros((H, W, 3))
    mesh_id = np.zeros((H, W), np.int32)
    velocity = np.zeros((H, W, 2))
    albedo = np.zeros((H, W, 3))
    color = np.zeros((H, W, 3))
    if len(arrays):
        packed = cam.packed()
        r, u, f = cam.basis()
        src, bary, scr, invz = _clip_and_setup(np.asarray(cam.position, float), r, u, f,
                                               cam.focal_px, float(W), float(H), arrays.positions)
        kinds, vecs, intens = pack_lights(scene)
        _raster_kernel(packed, W, H, src, bary, scr, invz, arrays.mesh_id, arrays.positions,
                       arrays.normals, arrays.ref_positions, arrays.albedo, arrays.emissive,
                       kinds, vecs, intens, np.asarray(scene.ambient, float),
                       np.asarray(scene.environment_color, float), float(tile_size),
                       depth, normal, mesh_id, velocity, albedo, color)
    else:
        color[:] = scene.environment_color
    return GBuffer(depth, normal, mesh_id, velocity, albedo, color)


def rasterize(scene: Scene, cfg) -> GBuffer:
    """Rasterize ``scene`` at shutter close with a closest-depth test at pixel centers.

    Depth ties go to the smaller mesh id so the result does not depend on
    triangle order or thread schedule.  Velocities are clamped to
    ``cfg.tile_size`` pixels.
    """
    return rasterize_arrays(scene, flatten(scene, RASTER_TIME), cfg.tile_size)

