# %% [markdown]
# # What a reveal costs
#
# Each masked pixel re-casts its primary ray past the foreground, up to
# `max_recursion` times.  Work should scale with the number of masked pixels,
# and the mask grows with the speed of the object.

# %%
import time

import numpy as np

from hybridblur.gbuffer import rasterize
from hybridblur.raymask import build_ray_mask
from hybridblur.rayreveal import build_accel, reveal_pass
from hybridblur.scenes import canonical_scene

rows = []
for speed in (6, 12, 18, 24, 30):
    scene, cfg = canonical_scene(speed_px=speed, size=512)
    cfg = cfg.resolved(scene)
    g = rasterize(scene, cfg)
    mask = build_ray_mask(g, cfg)
    accel = build_accel(scene)
    reveal_pass(mask, g, accel, scene, cfg)  # compile / warm caches
    dt = np.inf
    for _ in range(5):  # best of five, to shed scheduler noise
        t0 = time.perf_counter()
        bg = reveal_pass(mask, g, accel, scene, cfg)
        dt = min(dt, time.perf_counter() - t0)
    rows.append((speed, mask.count, bg.rays_cast, int(bg.valid.sum()), dt))

print("speed  masked   rays  valid   ms")
for speed, n, rays, valid, dt in rows:
    print(f"{speed:5d} {n:7d} {rays:6d} {valid:6d} {1e3 * dt:6.1f}")

# %% [markdown]
# Fit time against masked pixels.  On the canonical scene nearly every ray
# stops after one advance: the quad and the checker plane read differently
# in luminance, so each pixel casts about two rays.

# %%
n = np.array([r[1] for r in rows], float)
t = np.array([r[4] for r in rows])
slope, icept = np.polyfit(n, t, 1)
r2 = 1 - ((t - (slope * n + icept)) ** 2).sum() / ((t - t.mean()) ** 2).sum()
print(f"{1e9 * slope:.0f} ns per masked pixel, R^2 = {r2:.3f}")
print(f"rays per masked pixel: {sum(r[2] for r in rows) / n.sum():.2f}")
