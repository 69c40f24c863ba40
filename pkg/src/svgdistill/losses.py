"""Scalar objectives on rasters and path geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PathKind, Scene
from .rasterizer import RenderConfig, rasterize


@dataclass
class LossValue:
    value: float
    d_pixels: np.ndarray | None = None
    d_geometry: list[np.ndarray | None] | None = None


def _pixels(image) -> np.ndarray:
    return np.asarray(getattr(image, "pixels", image), dtype=float)


def _pair(image, target) -> tuple[np.ndarray, np.ndarray]:
    a, b = _pixels(image), _pixels(target)
    if a.shape != b.shape:
        raise ValueError(f"image shape {a.shape} does not match target {b.shape}")
    return a, b


def l2(image, target) -> LossValue:
    a, b = _pair(image, target)
    diff = a - b
    return LossValue(float(np.mean(diff * diff)), 2.0 * diff / diff.size)


def l1(image, target) -> LossValue:
    a, b = _pair(image, target)
    diff = a - b
    return LossValue(float(np.mean(np.abs(diff))), np.sign(diff) / diff.size)


def udf_weights(scene: Scene, cfg: RenderConfig | None = None) -> np.ndarray:
    """Unsigned distance from each pixel center to the nearest path boundary."""
    if not scene.paths:
        raise ValueError("distance weighting needs at least one path")
    return rasterize(scene, cfg).boundary_distance()


def udf_weighted_l2(image, target, scene: Scene | None = None, cfg: RenderConfig | None = None,
                    weights: np.ndarray | None = None) -> LossValue:
    """Squared error weighted per pixel by distance to the nearest path.

    ``(1/3) * sum_i d_i * sum_c (I_ic - T_ic)^2`` with no normalization by
    pixel count. The weights are constants for differentiation; pass
    ``weights`` to reuse a field computed elsewhere.
    """
    a, b = _pair(image, target)
    if weights is None:
        if scene is None:
            raise ValueError("either scene or weights is required")
        if cfg is None:
            cfg = RenderConfig(resolution=(a.shape[1], a.shape[0]))
        weights = udf_weights(scene, cfg)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != a.shape[:2]:
        raise ValueError("weight field does not match image size")
    diff = a - b
    w = weights[..., None]
    value = float(np.sum(w * diff * diff) / 3.0)
    return LossValue(value, 2.0 * w * diff / 3.0)


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def xing_segments(ctrl: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment self-intersection penalty and its control-point gradient.

    ``ctrl`` has shape ``(k, 4, 2)``. Returns ``(terms (k,), grad (k, 4, 2))``.
    """
    u = ctrl[:, 1] - ctrl[:, 0]
    v = ctrl[:, 2] - ctrl[:, 1]
    w = ctrl[:, 3] - ctrl[:, 2]
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    nw = np.linalg.norm(w, axis=1)
    ok = (nu > 0) & (nv > 0) & (nw > 0)
    denom = np.where(ok, nv * nw, 1.0)
    d1 = (_cross(u, v) > 0).astype(float)
    d2 = np.where(ok, _cross(v, w) / denom, 0.0)
    terms = np.where(ok, d1 * np.maximum(-d2, 0.0) + (1.0 - d1) * np.maximum(d2, 0.0), 0.0)

    # d(term)/d(D2): -1 where D1 and D2 < 0, +1 where not D1 and D2 > 0
    slope = np.where(ok, np.where(d1 > 0, -1.0 * (d2 < 0), 1.0 * (d2 > 0)), 0.0)
    nv2 = np.where(ok, nv * nv, 1.0)[:, None]
    nw2 = np.where(ok, nw * nw, 1.0)[:, None]
    dv = np.stack([w[:, 1], -w[:, 0]], axis=1) / denom[:, None] - d2[:, None] * v / nv2
    dw = np.stack([-v[:, 1], v[:, 0]], axis=1) / denom[:, None] - d2[:, None] * w / nw2
    dv *= slope[:, None]
    dw *= slope[:, None]
    grad = np.zeros_like(ctrl)
    grad[:, 1] = -dv
    grad[:, 2] = dv - dw
    grad[:, 3] = dw
    return terms, grad


def _segment_index(n_ctrl: int, n_seg: int, closed: bool) -> np.ndarray:
    idx = np.arange(n_seg)[:, None] * 3 + np.arange(4)[None, :]
    return idx % n_ctrl if closed else idx


def xing(scene: Scene) -> LossValue:
    """Self-intersection regularizer summed over every cubic segment.

    For control edges ``u, v, w`` of a segment, the first-corner turn
    indicator ``cross(u, v) > 0`` selects which sign of the second-corner
    sine ``cross(v, w) / (|v||w|)`` is penalized. Fixed squares are skipped.
    """
    total = 0.0
    grads: list[np.ndarray | None] = []
    for path in scene.paths:
        if path.kind is PathKind.FIXED_SQUARE:
            grads.append(None)
            continue
        pts = path.control_points
        idx = _segment_index(len(pts), path.n_segments, path.closed)
        terms, seg_grad = xing_segments(pts[idx])
        total += float(terms.sum())
        g = np.zeros_like(pts)
        np.add.at(g, idx.ravel(), seg_grad.reshape(-1, 2))
        grads.append(g)
    return LossValue(total, None, grads)


def saturation_penalty(image) -> LossValue:
    """Mean squared intensity of the image rescaled to [-1, 1], over channels.

    Callers apply the 0.05 weight used for pixel art.
    """
    a = _pixels(image)
    s = 2.0 * a - 1.0
    return LossValue(float(np.mean(s * s)), 4.0 * s / s.size)
