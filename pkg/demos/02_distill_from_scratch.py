"""
Score distillation into 64 random paths
=======================================

The prior here is analytic: a single Gaussian around a rendered icon. Its
noise prediction is exact, so the SDS update has a closed-form expectation
that points the rendering toward the icon. We start from 64 random circles
on a 600-unit canvas, render at 48 px, and follow the optimization by
dumping an SVG frame every 100 steps (stitch them into a video if you like).
"""

from pathlib import Path

import numpy as np

from svgdistill import pipeline
from svgdistill.rasterizer import RenderConfig, render
from svgdistill.sds import SdsConfig
from svgdistill.svgio import write_image, write_svg

out = Path(__file__).parent / "out" / "distill"
out.mkdir(parents=True, exist_ok=True)

size = 48
prior = pipeline.scene_prior(pipeline.demo_scene(), size, stdev=0.1)
mean = prior.components[0][0][0]

def frame(step, scene):
    if step % 100 == 0:
        write_svg(scene, out / f"frame_{step:04d}.svg")

style = pipeline.StyleConfig.iconography()
res = pipeline.run_style(style, prior, 0, "scratch", seed=0, sds_cfg=SdsConfig(steps=800),
                         augment=False, callback=frame)

rc = RenderConfig(resolution=size)
before = np.mean((render(res.init_scene, rc).pixels - mean) ** 2)
after = np.mean((render(res.scene, rc).pixels - mean) ** 2)
print(f"L2 to the prior mean: {before:.4f} -> {after:.5f}")

# the trace records the SDS gradient norm and any path reinitializations
swept = [r["step"] for r in res.trace if r["reinit"]]
print("steps with reinitialized paths:", swept[:10])

write_svg(res.scene, out / "final.svg")
write_image(render(res.scene, RenderConfig(resolution=300)), out / "final_300.png")
