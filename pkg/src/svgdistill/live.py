"""Layer-wise vectorization of a raster target.

Paths are added in stages at the regions the current approximation
reconstructs worst, then all paths and the background are optimized against
a distance-weighted L2 loss plus the self-intersection regularizer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from . import losses
from .geometry import Color, PathKind, Scene, VectorPath, circle_control_points
from .optimizer import AdamState, LrSchedule, ParamLayout, adam_step
from .rasterizer import Raster, RenderConfig, rasterize
from .reinit import REFERENCE_SIZE

log = logging.getLogger(__name__)

INIT_RADIUS = 20.0
BLUR_RADIUS = 2
DEFAULT_ITERS = 500
XING_WEIGHT = 0.01
STAGE_SCHEDULE = (2, 4, 10)


@dataclass(frozen=True)
class PathSchedule:
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if not self.counts:
            raise ValueError("schedule needs at least one stage")
        if min(self.counts) < 1:
            raise ValueError("every stage adds at least one path")

    @property
    def total(self) -> int:
        return sum(self.counts)


def default_lr() -> LrSchedule:
    """Constant rates in canvas pixels per step for points, color units otherwise."""
    return LrSchedule.constant(points=0.5, fill=0.01, background=0.01)


def loss_map(image, target) -> np.ndarray:
    """Per-pixel squared error summed over channels, box blurred (5x5)."""
    a, b = losses._pair(image, target)
    err = np.sum((a - b) ** 2, axis=-1)
    return ndimage.uniform_filter(err, size=2 * BLUR_RADIUS + 1, mode="constant")


def init_paths(k: int, lmap: np.ndarray, target, rng: np.random.Generator, radius: float,
               segments: int = 4, z_start: int = 0) -> list[VectorPath]:
    """``k`` circles centered at successive loss-map maxima.

    After each pick the map is suppressed within ``radius`` of the center so
    the next circle lands elsewhere. Fill is the target color under the
    center with opacity drawn from U(0.7, 1).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    tgt = losses._pixels(target)
    work = np.array(lmap, dtype=float)
    h, w = work.shape
    ys, xs = np.mgrid[0:h, 0:w]
    out = []
    for j in range(k):
        iy, ix = np.unravel_index(int(np.argmax(work)), work.shape)
        cx, cy = ix + 0.5, iy + 0.5
        work[(xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2 <= radius * radius] = -np.inf
        fill = Color(*tgt[iy, ix], rng.uniform(0.7, 1.0))
        out.append(VectorPath(PathKind.CLOSED_FILLED, circle_control_points((cx, cy), radius, segments),
                              fill=fill, z_index=z_start + j))
    return out


def border_mean(target) -> Color:
    px = losses._pixels(target)
    border = np.concatenate([px[0], px[-1], px[1:-1, 0], px[1:-1, -1]])
    return Color(*border.mean(axis=0))


@dataclass
class VectorizeResult:
    scene: Scene
    stage_l2: list[float] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)


def _optimize_stage(scene: Scene, target: np.ndarray, iters: int, render_cfg: RenderConfig,
                    lr: LrSchedule, xing_weight: float, stage: int, records: list[dict]) -> Scene:
    """Adam on UDF + xing; returns the lowest-L2 iterate seen (including the start)."""
    layout = ParamLayout(scene)
    state = AdamState.zeros(layout.size)
    current = scene
    best, best_l2 = scene, np.inf
    for it in range(iters + 1):
        rendering = rasterize(current, render_cfg)
        img = rendering.raster.pixels
        err = float(np.mean((img - target) ** 2))
        if err < best_l2:
            best, best_l2 = current, err
        if it == iters:
            break
        udf = losses.udf_weighted_l2(img, target, weights=rendering.boundary_distance())
        grad = rendering.backward(udf.d_pixels)
        xing_value = 0.0
        if xing_weight:
            xl = losses.xing(current)
            xing_value = xl.value
            for k, dg in enumerate(xl.d_geometry):
                if dg is not None and grad.points[k] is not None:
                    grad.points[k] = grad.points[k] + xing_weight * dg
        params = adam_step(state, layout.pack(current), layout.grad_vector(grad), layout.rates(lr, it, iters))
        current = layout.unpack(current, params)
        records.append({"stage": stage, "iter": it, "udf": udf.value, "xing": xing_value, "l2": err})
    return best


def vectorize(target, schedule: PathSchedule | Sequence[int], iters: int = DEFAULT_ITERS,
              render_cfg: RenderConfig | None = None, opt: LrSchedule | None = None, *, seed: int = 0,
              xing_weight: float = XING_WEIGHT, segments: int = 4, radius: float | None = None,
              snapshot_dir=None, callback: Callable[[int, Scene], None] | None = None) -> VectorizeResult:
    """Trace ``target`` (H x W x 3 in [0,1]) with staged closed paths.

    The canvas equals the target size. Each stage starts from the previous
    stage's result, so per-stage L2 never increases. With ``snapshot_dir``
    an SVG is written after every stage.
    """
    if not isinstance(schedule, PathSchedule):
        schedule = PathSchedule(tuple(schedule))
    tgt = losses._pixels(target)
    h, w = tgt.shape[:2]
    render_cfg = render_cfg or RenderConfig()
    if render_cfg.size_for(Scene(w, h)) != (w, h):
        raise ValueError("vectorize renders at the target resolution")
    opt = opt or default_lr()
    if radius is None:
        radius = INIT_RADIUS * max(w, h) / REFERENCE_SIZE
    rng = np.random.default_rng(seed)
    scene = Scene(w, h, border_mean(tgt), [])
    result = VectorizeResult(scene)
    for s, count in enumerate(schedule.counts):
        img = rasterize(scene, render_cfg).raster.pixels
        z0 = len(scene.paths)
        new = init_paths(count, loss_map(img, tgt), tgt, rng, radius, segments, z_start=z0)
        scene = Scene(w, h, scene.background, [p.copy() for p in scene.paths] + new)
        scene = _optimize_stage(scene, tgt, iters, render_cfg, opt, xing_weight, s, result.log)
        err = float(np.mean((rasterize(scene, render_cfg).raster.pixels - tgt) ** 2))
        result.stage_l2.append(err)
        log.info("stage %d: %d paths, l2 %.6f", s, len(scene.paths), err)
        if snapshot_dir is not None:
            from .svgio import write_svg

            Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
            write_svg(scene, Path(snapshot_dir) / f"stage_{s:02d}.svg")
        if callback is not None:
            callback(s, scene)
    result.scene = scene
    return result


def disk_target(size: int, center, radius: float, color=(0.0, 0.0, 1.0), background=(1.0, 1.0, 1.0)) -> Raster:
    """Hard-edged disk on a flat background, handy as a tracing target."""
    ys, xs = np.mgrid[0:size, 0:size] + 0.5
    inside = (xs - center[0]) ** 2 + (ys - center[1]) ** 2 <= radius * radius
    px = np.where(inside[..., None], np.asarray(color, float), np.asarray(background, float))
    return Raster(size, size, px)
