"""Adam over scene parameters with per-group learning-rate schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Color, PathKind, Scene
from .rasterizer import SceneGrad

POINTS, FILL, BACKGROUND = "points", "fill", "background"
GROUPS = (POINTS, FILL, BACKGROUND)


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup then cosine decay, scaled per parameter group.

    ``final=None`` holds the warmed-up rate constant after warmup.
    """

    start: float = 0.02
    peak: float = 0.2
    warmup_steps: int = 500
    final: float | None = 0.05
    multipliers: dict = field(default_factory=lambda: {POINTS: 1.0, FILL: 1.0 / 20, BACKGROUND: 1.0 / 200})

    def __post_init__(self):
        rates = [self.start, self.peak] + ([] if self.final is None else [self.final])
        if min(rates) <= 0 or min(self.multipliers.values()) <= 0:
            raise ValueError("learning rates must be positive")

    @classmethod
    def pixel_art(cls) -> "LrSchedule":
        return cls(start=1e-5, peak=1e-4, warmup_steps=1000, final=None,
                   multipliers={POINTS: 1.0, FILL: 1.0, BACKGROUND: 1.0})

    @classmethod
    def constant(cls, points: float, fill: float, background: float) -> "LrSchedule":
        return cls(start=points, peak=points, warmup_steps=0, final=points,
                   multipliers={POINTS: 1.0, FILL: fill / points, BACKGROUND: background / points})

    def scaled(self, factor: float) -> "LrSchedule":
        """Same schedule with every base rate multiplied by ``factor``."""
        return LrSchedule(self.start * factor, self.peak * factor, self.warmup_steps,
                          None if self.final is None else self.final * factor, dict(self.multipliers))


def lr_at(schedule: LrSchedule, step: int, total_steps: int, group: str = POINTS) -> float:
    if step > total_steps:
        raise ValueError("step beyond total_steps")
    w = schedule.warmup_steps
    if step < w:
        base = schedule.start + (schedule.peak - schedule.start) * step / w
    elif schedule.final is None or total_steps <= w:
        base = schedule.peak
    else:
        frac = (step - w) / (total_steps - w)
        base = schedule.final + (schedule.peak - schedule.final) * 0.5 * (1.0 + math.cos(math.pi * frac))
    return base * schedule.multipliers[group]


@dataclass
class AdamState:
    """Adam moments per optimizable scalar.

    Step counts are tracked per scalar so entries reset after path
    reinitialization restart their bias correction.
    """

    m: np.ndarray
    v: np.ndarray
    count: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.9
    eps: float = 1e-6

    @classmethod
    def zeros(cls, size: int, beta1: float = 0.9, beta2: float = 0.9, eps: float = 1e-6) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), np.zeros(size, dtype=np.int64), beta1, beta2, eps)

    @property
    def step(self) -> int:
        return int(self.count.max(initial=0))

    def reset(self, index) -> None:
        self.m[index] = 0.0
        self.v[index] = 0.0
        self.count[index] = 0

    def permute(self, order: np.ndarray) -> None:
        self.m = self.m[order]
        self.v = self.v[order]
        self.count = self.count[order]


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, rate) -> np.ndarray:
    """One bias-corrected Adam update; ``rate`` may be scalar or per-entry."""
    grads = np.asarray(grads, dtype=float)
    if grads.shape != params.shape or state.m.shape != params.shape:
        raise ValueError("parameter, gradient and state shapes differ")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient")
    state.count += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = state.m / (1 - state.beta1 ** state.count)
    v_hat = state.v / (1 - state.beta2 ** state.count)
    return params - rate * m_hat / (np.sqrt(v_hat) + state.eps)


class ParamLayout:
    """Flat-vector view of a scene's optimizable scalars.

    Order per path: control points (unless a fixed square), then fill rgba
    (unless a stroke); the background rgb comes last.
    """

    def __init__(self, scene: Scene):
        self.groups: list[str] = []
        self.path_slices: list[slice] = []
        self.point_slices: list[slice | None] = []
        self.fill_slices: list[slice | None] = []
        pos = 0
        for p in scene.paths:
            start = pos
            if p.kind is not PathKind.FIXED_SQUARE:
                n = p.control_points.size
                self.point_slices.append(slice(pos, pos + n))
                self.groups += [POINTS] * n
                pos += n
            else:
                self.point_slices.append(None)
            if p.kind is not PathKind.OPEN_STROKED:
                self.fill_slices.append(slice(pos, pos + 4))
                self.groups += [FILL] * 4
                pos += 4
            else:
                self.fill_slices.append(None)
            self.path_slices.append(slice(start, pos))
        self.background_slice = slice(pos, pos + 3)
        self.groups += [BACKGROUND] * 3
        self.size = pos + 3
        self.group_array = np.array(self.groups)

    def pack(self, scene: Scene) -> np.ndarray:
        vec = np.empty(self.size)
        for p, ps, fs in zip(scene.paths, self.point_slices, self.fill_slices):
            if ps is not None:
                vec[ps] = p.control_points.ravel()
            if fs is not None:
                vec[fs] = p.fill.as_array()
        vec[self.background_slice] = scene.background.rgb
        return vec

    def unpack(self, scene: Scene, vec: np.ndarray, clamp_colors: bool = True) -> Scene:
        paths = []
        for p, ps, fs in zip(scene.paths, self.point_slices, self.fill_slices):
            changes = {}
            if ps is not None:
                changes["control_points"] = vec[ps].reshape(-1, 2).copy()
            if fs is not None:
                fill = Color.from_array(vec[fs])
                changes["fill"] = fill.clamped() if clamp_colors else fill
            paths.append(p.copy(**changes))
        bg = Color.from_array(vec[self.background_slice])
        return Scene(scene.width, scene.height, bg.clamped() if clamp_colors else bg, paths)

    def rates(self, schedule: LrSchedule, step: int, total_steps: int) -> np.ndarray:
        out = np.empty(self.size)
        for g in GROUPS:
            out[self.group_array == g] = lr_at(schedule, step, total_steps, g)
        return out

    def grad_vector(self, grad: SceneGrad) -> np.ndarray:
        vec = grad.to_vector()
        if vec.size != self.size:
            raise ValueError("gradient does not match layout")
        return vec

    def path_indices(self, k: int) -> np.ndarray:
        return np.arange(self.path_slices[k].start, self.path_slices[k].stop)
