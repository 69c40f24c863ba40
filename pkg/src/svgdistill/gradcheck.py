"""Finite-difference checks of the rasterizer's reverse pass.

Nearest-edge selection and the inside test are piecewise constant in the
scene parameters, so the rendered image has kinks where they switch. A
scalar whose central difference straddles such a switch is reported as an
exclusion (with the reason) rather than a failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Scene
from .optimizer import ParamLayout
from .rasterizer import RenderConfig, rasterize

# pixels whose coverage slope is below this cannot move a finite difference
_ACTIVE = 1e-7


@dataclass
class GradCheckReport:
    n_scalars: int = 0
    n_passed: int = 0
    excluded: list[tuple[int, str]] = field(default_factory=list)
    failures: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def pass_rate(self) -> float:
        return self.n_passed / self.n_scalars if self.n_scalars else 1.0

    def merge(self, other: "GradCheckReport", offset: int = 0) -> None:
        self.n_scalars += other.n_scalars
        self.n_passed += other.n_passed
        self.excluded += [(i + offset, r) for i, r in other.excluded]
        self.failures += [(i + offset, a, n) for i, a, n in other.failures]


def close(analytic: float, numeric: float, rtol: float = 1e-3, atol: float = 1e-6) -> bool:
    return abs(analytic - numeric) <= max(rtol * abs(numeric), atol)


def _signature(rendering):
    """Discrete choices made by a render, masked to pixels that matter."""
    if not len(rendering.scene.paths):
        return None
    cov = rendering.cov
    active = cov * (1.0 - cov) > _ACTIVE
    return (np.where(active, rendering.edge_a, -1), np.where(active, rendering.sign, 0), rendering.fill_rules)


def _switched(base, other) -> str | None:
    if base is None:
        return None
    if base[2] != other[2]:
        return "fill rule changed"
    both = (base[0] >= 0) & (other[0] >= 0)
    if np.any(base[0][both] != other[0][both]):
        return "nearest edge changed"
    if np.any(base[1][both] != other[1][both]):
        return "inside test changed"
    return None


def check_scene(scene: Scene, cfg: RenderConfig, upstream: np.ndarray | None = None, h: float = 1e-3,
                rtol: float = 1e-3, atol: float = 1e-6) -> GradCheckReport:
    """Compare ``backward`` against central differences of ``sum(upstream * image)``.

    ``upstream`` defaults to ones (the plain pixel sum). Colors are not
    clamped during perturbation so the map stays smooth.
    """
    layout = ParamLayout(scene)
    base = rasterize(scene, cfg)
    if upstream is None:
        upstream = np.ones_like(base.raster.pixels)
    analytic = layout.grad_vector(base.backward(upstream))
    theta = layout.pack(scene)
    sig0 = _signature(base)
    report = GradCheckReport(n_scalars=layout.size)
    for i in range(layout.size):
        vals = []
        sigs = []
        for step in (h, -h, 2 * h, -2 * h):
            th = theta.copy()
            th[i] += step
            r = rasterize(layout.unpack(scene, th, clamp_colors=False), cfg)
            if abs(step) == h:
                vals.append(float(np.sum(upstream * r.raster.pixels)))
            else:
                sigs.append(_signature(r))
        numeric = (vals[0] - vals[1]) / (2 * h)
        if close(analytic[i], numeric, rtol, atol):
            report.n_passed += 1
            continue
        reason = _switched(sig0, sigs[0]) or _switched(sig0, sigs[1])
        if reason:
            report.excluded.append((i, reason))
        else:
            report.failures.append((i, float(analytic[i]), numeric))
    return report


def random_scene(rng: np.random.Generator, size: int = 64, max_paths: int = 5) -> Scene:
    """Small mixed scene of closed paths and strokes for gradient tests."""
    from .geometry import Color, PathKind, VectorPath, circle_control_points

    paths = []
    for k in range(int(rng.integers(1, max_paths + 1))):
        fill = Color(*rng.uniform(0, 1, 3), rng.uniform(0.5, 1.0))
        if rng.random() < 0.75:
            segs = int(rng.integers(2, 5))
            ctrl = circle_control_points(rng.uniform(12, size - 12, 2), rng.uniform(6, 18), segs)
            ctrl = ctrl + rng.normal(0, 2.0, ctrl.shape)
            paths.append(VectorPath(PathKind.CLOSED_FILLED, ctrl, fill=fill, z_index=k))
        else:
            start = rng.uniform(10, size - 10, 2)
            ctrl = start + np.cumsum(rng.normal(0, 5.0, (4, 2)), axis=0)
            paths.append(VectorPath(PathKind.OPEN_STROKED, ctrl, fill=fill, stroke_width=float(rng.uniform(2, 5)),
                                    stroke_color=fill, z_index=k))
    return Scene(size, size, Color(*rng.uniform(0, 1, 3)), paths)
