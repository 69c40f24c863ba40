"""
Pixel art and sketches
======================

Two constrained styles under the same analytic prior.

* Pixel art: sample an image from the prior, fit a 16 x 16 grid of squares
  to it in closed form (per-cell median), then finetune only the colors.
  Square geometry never changes.
* Sketch: 16 black strokes, 6 units wide, optimized from scratch.
"""

from pathlib import Path

import numpy as np

from svgdistill import pipeline
from svgdistill.rasterizer import RenderConfig, render
from svgdistill.sds import SdsConfig
from svgdistill.svgio import write_image, write_svg

out = Path(__file__).parent / "out" / "styles"
out.mkdir(parents=True, exist_ok=True)

prior = pipeline.scene_prior(pipeline.demo_scene(), 32, stdev=0.1)

# pixel art, initialized from the best of 4 samples
pix = pipeline.StyleConfig.pixel_art(grid=16)
res = pipeline.run_style(pix, prior, 0, "sample", seed=1, sds_cfg=SdsConfig(steps=300), k=4, sample_steps=30)
print("candidate scores:", np.round(res.candidate_scores, 4), "chosen:", res.chosen)
moved = max(np.abs(a.control_points - b.control_points).max() for a, b in zip(res.init_scene.paths, res.scene.paths))
print("largest square displacement:", moved)
write_svg(res.scene, out / "pixel_art.svg")
write_image(render(res.scene, RenderConfig(resolution=256)), out / "pixel_art.png")

# sketch from scratch
sk = pipeline.StyleConfig.sketch()
res = pipeline.run_style(sk, prior, 0, "scratch", seed=2, sds_cfg=SdsConfig(steps=400))
write_svg(res.scene, out / "sketch.svg")
write_image(render(res.scene, RenderConfig(resolution=256)), out / "sketch.png")
print("sketch prompt:", sk.prompt("a house"))
