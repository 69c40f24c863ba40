"""Style-aware drivers, sample-then-vectorize baseline, reranking and metrics.

Canvas coordinates follow the 600 px convention the style constants were
tuned for (init radius 20, stroke width 6, area threshold 64 px^2), while
rendering happens at whatever small resolution the prior works at.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Hashable, Sequence

import numpy as np

from . import live
from .diffusion import Denoiser, sample
from .geometry import WHITE, Color, PathKind, Scene, VectorPath, circle_control_points, rescale_scene, square_path
from .optimizer import LrSchedule
from .rasterizer import REFERENCE_CROP_SIZE, REFERENCE_RENDER_SIZE, RenderConfig
from .reinit import REFERENCE_SIZE, ReinitConfig
from .sds import AnalyticEncoder, AugmentSpec, SdsConfig, distill

log = logging.getLogger(__name__)

ICON_SUFFIX = "minimal flat 2d vector icon. lineal color. on a white background. trending on artstation"
PIXEL_SUFFIX = "pixel art. trending on artstation"
SKETCH_SUFFIX = "minimal 2d line drawing. trending on artstation."

DEFAULT_K = 4
K_SWEEP = (1, 4, 20)
SATURATION_WEIGHT = 0.05
INIT_OPACITY = (0.7, 1.0)


class Style(enum.Enum):
    ICONOGRAPHY = "iconography"
    PIXEL_ART = "pixel_art"
    SKETCH = "sketch"


class Mode(enum.Enum):
    FROM_SCRATCH = "scratch"
    SAMPLE_INIT = "sample"


@dataclass(frozen=True)
class StyleConfig:
    style: Style = Style.ICONOGRAPHY
    n_paths: int = 64
    segments: int = 4
    grid: int = 32
    stroke_width: float = 6.0
    suffix: str = ICON_SUFFIX
    canvas: int = REFERENCE_SIZE
    init_radius: float = 20.0

    @classmethod
    def iconography(cls, **kw) -> "StyleConfig":
        return cls(Style.ICONOGRAPHY, **kw)

    @classmethod
    def pixel_art(cls, **kw) -> "StyleConfig":
        kw.setdefault("suffix", PIXEL_SUFFIX)
        return cls(Style.PIXEL_ART, **kw)

    @classmethod
    def sketch(cls, **kw) -> "StyleConfig":
        kw = {"n_paths": 16, "segments": 5, "suffix": SKETCH_SUFFIX, **kw}
        return cls(Style.SKETCH, **kw)

    @classmethod
    def for_style(cls, style, **kw) -> "StyleConfig":
        style = Style(style)
        make = {Style.ICONOGRAPHY: cls.iconography, Style.PIXEL_ART: cls.pixel_art, Style.SKETCH: cls.sketch}
        return make[style](**kw)

    def prompt(self, caption: str) -> str:
        return f"{caption.rstrip()} {self.suffix}"


# ---------------------------------------------------------------------------
# Random initializations
# ---------------------------------------------------------------------------

def _random_fill(rng: np.random.Generator) -> Color:
    return Color(*rng.uniform(0.0, 1.0, 3), rng.uniform(*INIT_OPACITY))


def random_icon_scene(cfg: StyleConfig, rng: np.random.Generator) -> Scene:
    c = cfg.canvas
    paths = []
    for k in range(cfg.n_paths):
        center = rng.uniform(0, c, 2)
        paths.append(VectorPath(PathKind.CLOSED_FILLED, circle_control_points(center, cfg.init_radius, cfg.segments),
                                fill=_random_fill(rng), z_index=k))
    return Scene(c, c, WHITE, paths)


def random_pixel_scene(cfg: StyleConfig, rng: np.random.Generator) -> Scene:
    cell = cfg.canvas / cfg.grid
    paths = []
    for i in range(cfg.grid):
        for j in range(cfg.grid):
            paths.append(square_path(j * cell, i * cell, cell, _random_fill(rng), z_index=i * cfg.grid + j))
    return Scene(cfg.canvas, cfg.canvas, WHITE, paths)


def random_sketch_scene(cfg: StyleConfig, rng: np.random.Generator) -> Scene:
    """Short random-walk strokes, fixed black at the style's width."""
    c = cfg.canvas
    paths = []
    for k in range(cfg.n_paths):
        start = rng.uniform(0, c, 2)
        steps = rng.uniform(-0.05 * c, 0.05 * c, (3 * cfg.segments, 2))
        pts = np.vstack([start, start + np.cumsum(steps, axis=0)])
        paths.append(VectorPath(PathKind.OPEN_STROKED, pts, fill=Color(0, 0, 0), stroke_width=cfg.stroke_width,
                                stroke_color=Color(0, 0, 0), z_index=k))
    return Scene(c, c, WHITE, paths)


def random_scene(cfg: StyleConfig, rng: np.random.Generator) -> Scene:
    if cfg.style is Style.PIXEL_ART:
        return random_pixel_scene(cfg, rng)
    if cfg.style is Style.SKETCH:
        return random_sketch_scene(cfg, rng)
    return random_icon_scene(cfg, rng)


# ---------------------------------------------------------------------------
# Reranking and pixel fitting
# ---------------------------------------------------------------------------

def rerank(candidates: Sequence, scores) -> int:
    """Index of the best-scoring candidate; the lowest index wins ties."""
    s = np.asarray(scores, dtype=float).ravel()
    if len(candidates) == 0:
        raise ValueError("no candidates to rerank")
    if s.size != len(candidates):
        raise ValueError("one score per candidate is required")
    return int(np.argmax(s))


Scorer = Callable[[list, Hashable], np.ndarray]


def denoising_scorer(denoiser: Denoiser, timesteps: Sequence[int] = (100, 300, 500), seed: int = 0) -> Scorer:
    """Higher when the denoiser explains noised copies of an image well under ``cond``.

    A caption-consistency proxy for toy priors: minus the mean squared noise
    prediction error over fixed (t, noise) draws shared by all candidates.
    """
    def score(images, cond):
        sched = denoiser.sched
        out = []
        for x in images:
            rng = np.random.default_rng(seed)
            err = 0.0
            for t in timesteps:
                eps = rng.standard_normal(np.shape(x))
                x_t = sched.alpha[t] * x + sched.sigma[t] * eps
                err += float(np.mean((denoiser.predict(x_t, t, cond) - eps) ** 2))
            out.append(-err / len(timesteps))
        return np.array(out)
    return score


def pixel_fit(target, grid: int, norm: str = "l1") -> Scene:
    """Grid of opaque fixed squares whose colors minimize L1 (median) or L2 (mean)."""
    px = np.asarray(getattr(target, "pixels", target), dtype=float)
    h, w = px.shape[:2]
    if h % grid or w % grid or h // grid != w // grid:
        raise ValueError(f"{w}x{h} image does not split into a {grid}x{grid} grid of square cells")
    reduce = {"l1": np.median, "l2": np.mean}.get(norm.lower())
    if reduce is None:
        raise ValueError(f"unknown norm {norm!r}")
    cell = h // grid
    blocks = px.reshape(grid, cell, grid, cell, 3).transpose(0, 2, 1, 3, 4).reshape(grid, grid, cell * cell, 3)
    colors = reduce(blocks, axis=2)
    paths = [square_path(j * cell, i * cell, cell, Color(*colors[i, j]), z_index=i * grid + j)
             for i in range(grid) for j in range(grid)]
    return Scene(w, h, Color(*reduce(px.reshape(-1, 3), axis=0)), paths)


# ---------------------------------------------------------------------------
# Score tables and metrics
# ---------------------------------------------------------------------------

@dataclass
class ScoreTable:
    """Similarity scores, rows = generated items, columns = captions."""

    scores: np.ndarray
    items: list[str] = field(default_factory=list)
    captions: list[str] = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.ndim != 2:
            raise ValueError("score table must be a matrix")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("score table has non-finite entries")
        n, m = self.scores.shape
        self.items = list(self.items) or [str(i) for i in range(n)]
        self.captions = list(self.captions) or [str(j) for j in range(m)]
        if len(self.items) != n or len(self.captions) != m:
            raise ValueError("labels do not match the score matrix")

    @classmethod
    def read_csv(cls, path) -> "ScoreTable":
        text = Path(path).read_text(encoding="utf-8")
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows or rows[0][0] != "item":
            raise ValueError("score CSV must start with an 'item,<caption ids>' header")
        captions = rows[0][1:]
        items, data = [], []
        for r in rows[1:]:
            if len(r) != len(captions) + 1:
                raise ValueError(f"row {r[0]!r} has {len(r) - 1} scores, expected {len(captions)}")
            items.append(r[0])
            data.append([float(v) for v in r[1:]])
        return cls(np.array(data).reshape(len(items), len(captions)), items, captions, str(path))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            wr = csv.writer(f, lineterminator="\n")
            wr.writerow(["item"] + self.captions)
            for name, row in zip(self.items, self.scores):
                wr.writerow([name] + [repr(float(v)) for v in row])


def _square(table) -> np.ndarray:
    s = table.scores if isinstance(table, ScoreTable) else np.asarray(table, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square score matrix, got shape {s.shape}")
    return s


def r_precision(table) -> float:
    """Fraction of rows whose diagonal entry is the strict unique row maximum."""
    s = _square(table)
    diag = np.diag(s)
    off = s.copy()
    np.fill_diagonal(off, -np.inf)
    return float(np.mean(diag > off.max(axis=1))) if len(s) > 1 else 1.0


def mean_similarity(table) -> float:
    return float(np.mean(np.diag(_square(table))))


# ---------------------------------------------------------------------------
# End-to-end runs
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    scene: Scene
    trace: list[dict]
    init_scene: Scene
    candidate_scores: np.ndarray | None = None
    chosen: int | None = None


def default_live_schedule(n_paths: int) -> tuple[int, ...]:
    """Stages of 8, 8, then 16 at a time, the last one taking the remainder."""
    out, left = [], n_paths
    while left > 0:
        step = min(8 if len(out) < 2 else 16, left)
        out.append(step)
        left -= step
    return tuple(out)


def _image_size(prior: Denoiser, sds_cfg: SdsConfig) -> int:
    shape = tuple(prior.shape)
    if len(shape) != 3 or shape[2] != 3 or shape[0] != shape[1]:
        raise ValueError(f"prior must work on square RGB images, got shape {shape}")
    return shape[0] * (sds_cfg.encoder_factor if sds_cfg.latent else 1)


def sample_candidates(prior: Denoiser, cond: Hashable | None, k: int, size: int, sds_cfg: SdsConfig, seed: int,
                      steps: int = 50) -> list[np.ndarray]:
    """``k`` guided DDIM samples as RGB images in [0,1]."""
    latent_shape = tuple(prior.shape)
    out = []
    for i, s in enumerate(np.random.SeedSequence(seed).generate_state(k)):
        x = sample(prior, cond, latent_shape, prior.sched, steps=steps, omega=sds_cfg.guidance, seed=int(s))
        if sds_cfg.latent:
            f = sds_cfg.encoder_factor
            x = AnalyticEncoder(f).transpose(x) * (f * f)
        out.append(np.clip(x, 0.0, 1.0).reshape(size, size, 3))
    return out


def run_style(style_cfg: StyleConfig, prior: Denoiser, cond: Hashable | None, mode: Mode | str = Mode.FROM_SCRATCH,
              seed: int = 0, *, sds_cfg: SdsConfig | None = None, k: int = DEFAULT_K, augment: bool | None = None,
              reinit: bool = True, live_iters: int = live.DEFAULT_ITERS, live_schedule: Sequence[int] | None = None,
              sample_steps: int = 50, scorer: Scorer | None = None, lr: LrSchedule | None = None,
              xing_weight: float = live.XING_WEIGHT, callback=None) -> RunResult:
    """Generate a style-constrained scene for ``cond`` under ``prior``.

    FromScratch distills a random style initialization (with augmentation
    unless ``augment=False``). SampleInit draws ``k`` samples, keeps the best
    one under ``scorer``, vectorizes it (LIVE for icons, per-cell L1 fit for
    pixel art) and finetunes that with SDS, without augmentation.
    """
    mode = Mode(mode)
    sds_cfg = sds_cfg or SdsConfig()
    if mode is Mode.SAMPLE_INIT and style_cfg.style is Style.SKETCH:
        raise ValueError("sketches are always trained from scratch")
    seeds = np.random.SeedSequence(seed).generate_state(3)
    init_rng = np.random.default_rng(int(seeds[0]))
    size = _image_size(prior, sds_cfg)
    if augment is None:
        augment = mode is Mode.FROM_SCRATCH
    canvas = style_cfg.canvas

    scores = chosen = None
    if mode is Mode.FROM_SCRATCH:
        init = random_scene(style_cfg, init_rng)
    else:
        cands = sample_candidates(prior, cond, k, size, sds_cfg, int(seeds[1]), sample_steps)
        scores = (scorer or denoising_scorer(prior))(cands, cond)
        chosen = rerank(cands, scores)
        target = cands[chosen]
        if style_cfg.style is Style.PIXEL_ART:
            fit = pixel_fit(target, style_cfg.grid, "l1")
        else:
            sched = live_schedule or default_live_schedule(style_cfg.n_paths)
            fit = live.vectorize(target, sched, live_iters, RenderConfig(), seed=int(seeds[0]),
                                 segments=style_cfg.segments, xing_weight=xing_weight).scene
        init = rescale_scene(fit, canvas, canvas)

    render_size = size
    aug_spec = None
    if augment:
        render_size = round(size * REFERENCE_RENDER_SIZE / REFERENCE_CROP_SIZE)
        aug_spec = AugmentSpec(crop_size=size)
    sds_cfg = replace(sds_cfg, augment=aug_spec)

    pixel = style_cfg.style is Style.PIXEL_ART
    if lr is None:
        lr = LrSchedule.pixel_art() if pixel else LrSchedule()
    reinit_cfg = None
    if reinit and not pixel:
        reinit_cfg = ReinitConfig() if mode is Mode.SAMPLE_INIT else ReinitConfig.from_scratch()
    result = distill(init, prior, cond, sds_cfg, RenderConfig(resolution=render_size), lr, reinit_cfg,
                     seed=int(seeds[2]), xing_weight=0.0 if pixel else xing_weight,
                     saturation_weight=SATURATION_WEIGHT if pixel else 0.0, callback=callback)
    return RunResult(result.scene, result.trace, init, scores, chosen)


# ---------------------------------------------------------------------------
# Prompt lists and sweeps
# ---------------------------------------------------------------------------

def load_prompts(path) -> list[str]:
    """One prompt per line; blank lines and ``#`` comments are skipped."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]


def label_for(index: int, labels: Sequence[Hashable]) -> Hashable:
    if not labels:
        raise ValueError("prior has no labels")
    return labels[index % len(labels)]


def sweep(prompts: Sequence[str], prior: Denoiser, k_values: Sequence[int] = K_SWEEP, *,
          style_cfg: StyleConfig | None = None, sds_cfg: SdsConfig | None = None, seed: int = 0,
          scorer: Scorer | None = None, distill_steps: int = 0, out_dir=None, sample_steps: int = 50) -> list[dict]:
    """Best-of-K reranking per (prompt, K); optionally finetune each winner.

    Prompts map to prior labels round-robin. With ``distill_steps > 0`` each
    job runs the SampleInit pipeline and writes its SVG to ``out_dir``.
    """
    from .svgio import write_svg

    style_cfg = style_cfg or StyleConfig.iconography()
    sds_cfg = sds_cfg or SdsConfig()
    scorer = scorer or denoising_scorer(prior)
    size = _image_size(prior, sds_cfg)
    rows = []
    for i, prompt in enumerate(prompts):
        cond = label_for(i, list(prior.labels))
        for k in k_values:
            job_seed = seed * 1_000_003 + i
            cands = sample_candidates(prior, cond, k, size, sds_cfg, job_seed, sample_steps)
            scores = scorer(cands, cond)
            best = rerank(cands, scores)
            row = {"prompt": style_cfg.prompt(prompt), "label": cond, "k": k, "chosen": best,
                   "score": float(scores[best])}
            if distill_steps > 0:
                res = run_style(style_cfg, prior, cond, Mode.SAMPLE_INIT, job_seed, k=k, scorer=scorer,
                                sds_cfg=replace(sds_cfg, steps=distill_steps), sample_steps=sample_steps)
                if out_dir is not None:
                    Path(out_dir).mkdir(parents=True, exist_ok=True)
                    svg = Path(out_dir) / f"prompt{i:03d}_k{k}.svg"
                    write_svg(res.scene, svg)
                    row["svg"] = str(svg)
            log.info("%s", row)
            rows.append(row)
    return rows


def demo_scene() -> Scene:
    """Fixed three-shape icon used as the default analytic prior's mean."""
    from .geometry import circle_path, polygon_path

    return Scene(REFERENCE_SIZE, REFERENCE_SIZE, Color(1.0, 1.0, 1.0), [
        polygon_path([(120, 420), (300, 120), (480, 420)], Color(0.95, 0.6, 0.1), z_index=0),
        circle_path((300, 330), 90, Color(0.1, 0.3, 0.8), z_index=1),
        circle_path((300, 330), 35, Color(1.0, 1.0, 1.0), z_index=2),
    ])


def scene_prior(scene: Scene, size: int, stdev: float = 0.1, label: Hashable = 0):
    """Single-Gaussian prior centered on ``scene`` rendered at ``size``."""
    from .diffusion import GaussianMixturePrior
    from .rasterizer import render

    return GaussianMixturePrior.single(render(scene, RenderConfig(resolution=size)).pixels, stdev, label)
