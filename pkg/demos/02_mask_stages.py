# %% [markdown]
# # How the ray mask is built
#
# Rays are expensive, so only a thin band of pixels gets one.  The band comes
# out of three filters applied in turn:
#
# 1. **candidates**: moving pixels whose motion vector lands on a surface
#    noticeably farther away;
# 2. **edges**: candidates sitting on a Sobel edge of the depth or normal
#    buffer;
# 3. **range check**: pixels whose own motion path crosses one of those edges.
#
# The last stage searches from every pixel, not just the candidates, so the
# final band can be wider than the candidate set.

# %%
import dataclasses
from pathlib import Path

from hybridblur.gbuffer import rasterize
from hybridblur.imageio import write_mask_png
from hybridblur.raymask import build_ray_mask_stages, edge_response
from hybridblur.scenes import canonical_scene

out = Path("demo_out")
out.mkdir(exist_ok=True)
scene, cfg = canonical_scene(speed_px=30.0, size=512)
cfg = cfg.resolved(scene)
g = rasterize(scene, cfg)

# %%
stages = build_ray_mask_stages(g, cfg)
for name in ("candidate", "edge", "ray"):
    m = getattr(stages, name)
    write_mask_png(out / f"mask_{name}.png", m)
    print(f"{name:9s} {m.count:7d} px")

# %% [markdown]
# The edge threshold is the main knob.  Raising it past the strongest
# response empties the mask; a static scene never produces one at all.

# %%
peak = float(edge_response(g, cfg).max())
print(f"strongest edge response {peak:.2f}")
for tau in (0.5, 1.0, 2.0, peak + 0.1):
    m = build_ray_mask_stages(g, dataclasses.replace(cfg, sobel_threshold=tau)).ray
    print(f"  threshold {tau:5.2f} -> {m.count} px")

still, still_cfg = canonical_scene(static=True, size=512)
still_cfg = still_cfg.resolved(still)
print("static scene:", build_ray_mask_stages(rasterize(still, still_cfg), still_cfg).ray.count, "px")
