"""Periodic replacement of faint or collapsed paths during optimization."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import DEFAULT_SUBDIVISION, Color, PathKind, Scene, VectorPath, circle_control_points, path_area

REFERENCE_SIZE = 600


@dataclass(frozen=True)
class ReinitConfig:
    """Thresholds are strict: a path exactly at a threshold is kept.

    ``area_threshold`` and ``radius`` are in canvas pixels; use
    :meth:`scaled_to` to carry values tuned at 600 px to another canvas.
    """

    opacity_threshold: float = 0.05
    area_threshold: float = 64.0
    frequency: int = 50
    freeze_window: int = 300
    radius: float = 20.0

    def __post_init__(self):
        if self.opacity_threshold < 0 or self.area_threshold < 0:
            raise ValueError("thresholds must be non-negative")
        if self.frequency < 1:
            raise ValueError("frequency must be >= 1")

    @classmethod
    def from_scratch(cls) -> "ReinitConfig":
        return cls(area_threshold=0.0)

    def scaled_to(self, canvas: float, reference: float = REFERENCE_SIZE) -> "ReinitConfig":
        s = canvas / reference
        return replace(self, area_threshold=self.area_threshold * s * s, radius=self.radius * s)

    def active(self, step: int, total_steps: int) -> bool:
        return step % self.frequency == 0 and step < total_steps - self.freeze_window


def needs_reinit(path: VectorPath, cfg: ReinitConfig) -> bool:
    if path.kind is PathKind.OPEN_STROKED:
        return path.stroke_color.a < cfg.opacity_threshold
    if path.fill.a < cfg.opacity_threshold:
        return True
    return path_area(path, DEFAULT_SUBDIVISION) < cfg.area_threshold


def random_circle(scene: Scene, radius: float, segments: int, rng: np.random.Generator, z_index: int) -> VectorPath:
    center = (rng.uniform(0, scene.width), rng.uniform(0, scene.height))
    rgb = rng.uniform(0.0, 1.0, 3)
    fill = Color(*rgb, rng.uniform(0.7, 1.0))
    return VectorPath(PathKind.CLOSED_FILLED, circle_control_points(center, radius, segments),
                      fill=fill, z_index=z_index)


def sweep(scene: Scene, cfg: ReinitConfig, step: int, total_steps: int,
          rng: np.random.Generator) -> tuple[Scene, list[int]]:
    """Replace unused paths with random circles drawn on top.

    Returns the new scene and the indices (into ``scene.paths``) that were
    replaced. Survivors keep their order; replacements follow them in the
    order of the paths they replace, each with a fresh top z_index. A
    replacement uses the same segment count as the path it replaces.
    """
    if any(p.kind is PathKind.FIXED_SQUARE for p in scene.paths):
        raise ValueError("fixed-square scenes are not reinitialized")
    if not cfg.active(step, total_steps):
        return scene, []
    replaced = [k for k, p in enumerate(scene.paths) if needs_reinit(p, cfg)]
    if not replaced:
        return scene, []
    top = max(p.z_index for p in scene.paths)
    keep = [p.copy() for k, p in enumerate(scene.paths) if k not in replaced]
    fresh = []
    for j, k in enumerate(replaced):
        old = scene.paths[k]
        if old.kind is PathKind.OPEN_STROKED:
            pts = old.control_points + rng.uniform(0, 1, 2) * (scene.width, scene.height) - old.control_points[0]
            color = Color(*rng.uniform(0.0, 1.0, 3), rng.uniform(0.7, 1.0))
            fresh.append(old.copy(control_points=pts, stroke_color=color, z_index=top + 1 + j))
        else:
            fresh.append(random_circle(scene, cfg.radius, old.n_segments, rng, top + 1 + j))
    return Scene(scene.width, scene.height, scene.background, keep + fresh), replaced


def reinit_order(n_paths: int, replaced: list[int]) -> list[int]:
    """Old path index for each position of the swept scene."""
    rep = set(replaced)
    return [k for k in range(n_paths) if k not in rep] + list(replaced)
