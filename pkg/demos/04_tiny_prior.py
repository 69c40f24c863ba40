"""
Training a tiny learned prior
=============================

A small numpy MLP denoiser learns two classes of 8 x 8 images (left half
lit, right half lit). We sample from it with guided DDIM, then use it as
the SDS prior for a handful of paths.
"""

from pathlib import Path

import numpy as np

from svgdistill import diffusion, pipeline
from svgdistill.rasterizer import Raster, RenderConfig, render
from svgdistill.sds import SdsConfig
from svgdistill.svgio import write_image, write_svg

out = Path(__file__).parent / "out" / "tiny"
out.mkdir(parents=True, exist_ok=True)

rng = np.random.default_rng(0)
left = np.zeros((8, 8, 3))
left[:, :4] = 1.0
right = left[:, ::-1].copy()
labels = rng.integers(0, 2, 512)
images = np.where(labels[:, None, None, None] == 0, left, right) + rng.normal(0, 0.1, (512, 8, 8, 3))

model = diffusion.TinyDenoiser((8, 8, 3), ["left", "right"], diffusion.make_schedule(1000), seed=0)
losses = model.train(images, ["left" if y == 0 else "right" for y in labels], steps=2000, seed=0)
print(f"training loss {np.mean(losses[:50]):.3f} -> {np.mean(losses[-50:]):.3f}")
model.save(out / "tiny.bin")

for lab in model.labels:
    x = diffusion.sample(model, lab, model.shape, model.sched, steps=50, omega=2.0, seed=3)
    write_image(Raster.from_array(np.clip(x, 0, 1)), out / f"sample_{lab}.png")
    print(lab, "sample column means:", np.round(x.mean(axis=(0, 2)), 2))

# distill 6 paths toward the "right" class
style = pipeline.StyleConfig.iconography(n_paths=6)
res = pipeline.run_style(style, model, "right", "scratch", seed=0, sds_cfg=SdsConfig(steps=400, guidance=2.0),
                         augment=False)
img = render(res.scene, RenderConfig(resolution=8)).pixels
print("distilled column means:", np.round(img.mean(axis=(0, 2)), 2))
write_svg(res.scene, out / "right.svg")
