"""
Tracing a raster icon with staged paths
=======================================

We render the built-in three-shape icon at 128 px, then trace it back into
paths: 2 circles first, then 4 more, then 10 more. Each stage seeds its new
circles where the current approximation is worst, and optimizes everything
against a boundary-weighted L2. One SVG is written per stage.
"""

from pathlib import Path

import numpy as np

from svgdistill import live, pipeline
from svgdistill.rasterizer import RenderConfig, render
from svgdistill.svgio import write_image, write_svg

out = Path(__file__).parent / "out" / "trace"
out.mkdir(parents=True, exist_ok=True)

# the target: a flat icon, rendered at 128 x 128
target = render(pipeline.demo_scene(), RenderConfig(resolution=128))
write_image(target, out / "target.png")

# trace it; a few hundred iterations per stage is enough at this size
result = live.vectorize(target, live.STAGE_SCHEDULE, iters=300, seed=0, snapshot_dir=out)

for stage, err in enumerate(result.stage_l2):
    print(f"stage {stage}: {sum(live.STAGE_SCHEDULE[:stage + 1]):2d} paths, l2 {err:.2e}")

# the traced scene is resolution independent: render it 4x larger
write_svg(result.scene, out / "traced.svg")
big = render(result.scene, RenderConfig(resolution=512))
write_image(big, out / "traced_512.png")
print("max pixel error at 128 px:", np.abs(render(result.scene).pixels - target.pixels).max().round(3))
