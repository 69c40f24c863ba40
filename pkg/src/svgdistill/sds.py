"""Score distillation: turning a denoiser into gradients on scene parameters."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np
import scipy.sparse as sp

from . import losses
from .diffusion import DEFAULT_GUIDANCE, Denoiser, NoiseSchedule, cfg as guided_eps
from .geometry import Scene
from .optimizer import AdamState, LrSchedule, ParamLayout, adam_step
from .rasterizer import REFERENCE_CROP_SIZE, REFERENCE_RENDER_SIZE, RenderConfig, rasterize
from .reinit import ReinitConfig, reinit_order, sweep


@dataclass(frozen=True)
class AugmentSpec:
    """Random perspective (with probability) followed by a random crop.

    ``crop_size=None`` crops ``512/600`` of the input side.
    """

    perspective_prob: float = 0.7
    distortion_scale: float = 0.5
    crop_size: int | None = None

    def crop_for(self, size: int) -> int:
        crop = round(size * REFERENCE_CROP_SIZE / REFERENCE_RENDER_SIZE) if self.crop_size is None else self.crop_size
        if crop > size:
            raise ValueError("crop larger than the image")
        return int(crop)


@dataclass
class AugmentRecord:
    """A fixed resampling: ``out = W @ in`` per channel, with exact transpose."""

    weights: sp.csr_matrix
    in_shape: tuple[int, int]
    out_shape: tuple[int, int]
    homography: np.ndarray
    offset: tuple[int, int]

    def apply(self, image: np.ndarray) -> np.ndarray:
        h, w = self.in_shape
        flat = np.asarray(image, dtype=float).reshape(h * w, -1)
        return (self.weights @ flat).reshape(*self.out_shape, -1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        oh, ow = self.out_shape
        flat = np.asarray(grad, dtype=float).reshape(oh * ow, -1)
        return (self.weights.T @ flat).reshape(*self.in_shape, -1)


def homography_from_points(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 matrix mapping 4 ``src`` points onto ``dst`` points."""
    rows, rhs = [], []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs += [u, v]
    h = np.linalg.solve(np.array(rows, dtype=float), np.array(rhs, dtype=float))
    return np.append(h, 1.0).reshape(3, 3)


def bilinear_weights(sx: np.ndarray, sy: np.ndarray, in_shape: tuple[int, int]) -> sp.csr_matrix:
    """Sparse bilinear sampling matrix; samples are in pixel-index coordinates.

    Taps outside the image contribute zero (zero padding).
    """
    h, w = in_shape
    n_out = sx.size
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    rows, cols, vals = [], [], []
    out_idx = np.arange(n_out)
    for dy, dx, wt in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)),
                       (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
        xi, yi = x0 + dx, y0 + dy
        ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h) & (wt != 0)
        rows.append(out_idx[ok])
        cols.append(yi[ok] * w + xi[ok])
        vals.append(wt[ok])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n_out, h * w))


def make_augment(in_shape: tuple[int, int], spec: AugmentSpec, rng: np.random.Generator) -> AugmentRecord:
    h, w = in_shape
    homography = np.eye(3)
    if spec.perspective_prob > 0 and rng.random() < spec.perspective_prob:
        corners = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=float)
        inward = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float)
        shift = rng.uniform(0, 1, (4, 2)) * spec.distortion_scale * np.array([w / 2, h / 2])
        # maps output coordinates back into the source image
        homography = homography_from_points(corners + inward * shift, corners)
    crop_w, crop_h = spec.crop_for(w), spec.crop_for(h)
    ox = int(rng.integers(0, w - crop_w + 1))
    oy = int(rng.integers(0, h - crop_h + 1))
    ys, xs = np.mgrid[0:crop_h, 0:crop_w]
    px = xs.ravel() + ox + 0.5
    py = ys.ravel() + oy + 0.5
    if np.array_equal(homography, np.eye(3)):
        sx, sy = px - 0.5, py - 0.5
    else:
        den = homography[2, 0] * px + homography[2, 1] * py + homography[2, 2]
        sx = (homography[0, 0] * px + homography[0, 1] * py + homography[0, 2]) / den - 0.5
        sy = (homography[1, 0] * px + homography[1, 1] * py + homography[1, 2]) / den - 0.5
    weights = bilinear_weights(sx, sy, (h, w))
    return AugmentRecord(weights, (h, w), (crop_h, crop_w), homography, (ox, oy))


def augment(image: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> tuple[np.ndarray, AugmentRecord]:
    img = np.asarray(getattr(image, "pixels", image), dtype=float)
    record = make_augment(img.shape[:2], spec, rng)
    return record.apply(img), record


@dataclass(frozen=True)
class AnalyticEncoder:
    """Non-overlapping ``factor x factor`` patch averaging per channel."""

    factor: int = 8

    def _check(self, shape):
        h, w = shape[:2]
        if h % self.factor or w % self.factor:
            raise ValueError(f"image size {w}x{h} not divisible by encoder factor {self.factor}")

    def encode(self, image: np.ndarray) -> np.ndarray:
        x = np.asarray(image, dtype=float)
        self._check(x.shape)
        f = self.factor
        h, w, c = x.shape
        return x.reshape(h // f, f, w // f, f, c).mean(axis=(1, 3))

    def transpose(self, grad_latent: np.ndarray) -> np.ndarray:
        f = self.factor
        g = np.repeat(np.repeat(grad_latent, f, axis=0), f, axis=1)
        return g / (f * f)


def weight_fn(kind: str, sched: NoiseSchedule) -> Callable[[int], float]:
    if kind == "unit":
        return lambda t: 1.0
    if kind == "sigma_over_alpha":
        return lambda t: float(sched.sigma[t] / sched.alpha[t])
    if kind == "zero":
        return lambda t: 0.0
    raise ValueError(f"unknown weighting {kind!r}")


@dataclass(frozen=True)
class SdsConfig:
    t_min: int = 50
    t_max: int = 950
    guidance: float = DEFAULT_GUIDANCE
    weighting: str = "unit"
    steps: int = 1000
    augment: AugmentSpec | None = None
    latent: bool = False
    encoder_factor: int = 8

    def check(self, sched: NoiseSchedule) -> None:
        if not 1 <= self.t_min < self.t_max <= sched.T:
            raise ValueError("need 1 <= t_min < t_max <= T")


def _draw(rng: np.random.Generator, shape, sds_cfg: SdsConfig, t, eps):
    # t before eps: shared-rng runs stay aligned whatever the image size
    if t is None:
        t = int(rng.integers(sds_cfg.t_min, sds_cfg.t_max + 1))
    if eps is None:
        eps = rng.standard_normal(shape)
    return t, eps


def sds_grad(denoiser: Denoiser, image, cond: Hashable | None, sds_cfg: SdsConfig, rng: np.random.Generator,
             sched: NoiseSchedule | None = None, t: int | None = None, eps: np.ndarray | None = None) -> np.ndarray:
    """Single-draw SDS gradient ``w(t) * (eps_hat(x_t; y) - eps)`` on ``image``.

    The denoiser's own Jacobian is not applied. ``t`` and ``eps`` may be
    fixed to freeze a realization.
    """
    x = np.asarray(getattr(image, "pixels", image), dtype=float)
    sched = sched or denoiser.sched
    sds_cfg.check(sched)
    t, eps = _draw(rng, x.shape, sds_cfg, t, eps)
    x_t = sched.alpha[t] * x + sched.sigma[t] * eps
    eps_hat = guided_eps(denoiser, x_t, t, cond, sds_cfg.guidance)
    return weight_fn(sds_cfg.weighting, sched)(t) * (eps_hat - eps)


def latent_sds_grad(denoiser: Denoiser, image, cond: Hashable | None, encoder: AnalyticEncoder,
                    sds_cfg: SdsConfig, rng: np.random.Generator, sched: NoiseSchedule | None = None,
                    t: int | None = None, eps: np.ndarray | None = None) -> np.ndarray:
    """SDS computed on ``encoder.encode(image)`` and pulled back to pixels."""
    x = np.asarray(getattr(image, "pixels", image), dtype=float)
    z = encoder.encode(x)
    g_z = sds_grad(denoiser, z, cond, sds_cfg, rng, sched, t, eps)
    return encoder.transpose(g_z)


@dataclass
class DistillResult:
    scene: Scene
    trace: list[dict] = field(default_factory=list)
    state: AdamState | None = None

    def write_trace(self, path) -> None:
        write_trace(self.trace, path)


TRACE_FIELDS = ("step", "sds_proxy_norm", "xing", "elapsed_ms", "reinit")


def write_trace(trace: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in trace:
            writer.writerow(row)


def distill(scene: Scene, denoiser: Denoiser, cond: Hashable | None, sds_cfg: SdsConfig,
            render_cfg: RenderConfig | None = None, lr: LrSchedule | None = None,
            reinit_cfg: ReinitConfig | None = None, *, seed: int = 0, xing_weight: float = 0.01,
            saturation_weight: float = 0.0, sched: NoiseSchedule | None = None,
            adam_betas: tuple[float, float] = (0.9, 0.9), adam_eps: float = 1e-6,
            callback: Callable[[int, Scene], None] | None = None) -> DistillResult:
    """Optimize a scene against a frozen denoiser with score distillation.

    Each step renders, optionally augments, takes an SDS (or latent SDS)
    gradient, pulls it back through augmentation and rasterization, adds the
    self-intersection and saturation terms, and takes one Adam step. Colors
    are clamped to [0, 1] after every update. Paths are swept for
    reinitialization after the update when ``reinit_cfg`` is given.
    """
    render_cfg = render_cfg or RenderConfig()
    lr = lr or LrSchedule()
    sched = sched or denoiser.sched
    sds_cfg.check(sched)
    rng = np.random.default_rng(seed)
    encoder = AnalyticEncoder(sds_cfg.encoder_factor) if sds_cfg.latent else None
    total = sds_cfg.steps
    current = scene.copy()
    layout = ParamLayout(current)
    state = AdamState.zeros(layout.size, *adam_betas, adam_eps)
    trace: list[dict] = []
    t0 = time.perf_counter()

    for step in range(total):
        rendering = rasterize(current, render_cfg)
        img = rendering.raster.pixels
        record = None
        x = img
        if sds_cfg.augment is not None:
            x, record = augment(img, sds_cfg.augment, rng)
        if encoder is not None:
            g = latent_sds_grad(denoiser, x, cond, encoder, sds_cfg, rng, sched)
        else:
            g = sds_grad(denoiser, x, cond, sds_cfg, rng, sched)
        proxy = float(np.linalg.norm(g))
        if record is not None:
            g = record.backward(g)
        if saturation_weight:
            g = g + saturation_weight * losses.saturation_penalty(img).d_pixels
        grad = rendering.backward(g)
        xing_value = 0.0
        if xing_weight:
            xl = losses.xing(current)
            xing_value = xl.value
            for k, dg in enumerate(xl.d_geometry):
                if dg is not None and grad.points[k] is not None:
                    grad.points[k] = grad.points[k] + xing_weight * dg

        params = layout.pack(current)
        rates = layout.rates(lr, step, total)
        params = adam_step(state, params, layout.grad_vector(grad), rates)
        if not np.all(np.isfinite(params)):
            raise FloatingPointError(f"non-finite parameters at step {step}")
        current = layout.unpack(current, params)

        replaced: list[int] = []
        if reinit_cfg is not None:
            current, replaced = sweep(current, reinit_cfg, step, total, rng)
            if replaced:
                old_layout = layout
                order = reinit_order(len(current.paths), replaced)
                layout = ParamLayout(current)
                perm = np.concatenate([old_layout.path_indices(k) for k in order]
                                      + [np.arange(old_layout.background_slice.start, old_layout.size)])
                state.permute(perm)
                for pos in range(len(order) - len(replaced), len(order)):
                    state.reset(layout.path_indices(pos))
        trace.append({
            "step": step,
            "sds_proxy_norm": proxy,
            "xing": xing_value,
            "elapsed_ms": round((time.perf_counter() - t0) * 1000.0, 3),
            "reinit": ";".join(str(k) for k in replaced),
        })
        if callback is not None:
            callback(step, current)
    return DistillResult(current, trace, state)
