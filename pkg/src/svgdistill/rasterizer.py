"""Soft-coverage rasterizer with an exact reverse-mode pass.

Coverage of a path at a pixel center is ``logistic(-sd / tau)`` where ``sd``
is the signed distance (in output pixels) to the flattened outline. Paths
are composited back-to-front over an opaque background. The backward pass
is the vector-Jacobian product of this map; the inside/outside sign and the
choice of nearest edge are held fixed while differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels
from .geometry import DEFAULT_SUBDIVISION, PathKind, Scene, flatten_matrix, flatten_path

REFERENCE_RENDER_SIZE = 600
REFERENCE_CROP_SIZE = 512


@dataclass(frozen=True)
class RenderConfig:
    resolution: int | tuple[int, int] | None = None
    aa_width: float = 0.8
    subdivision: int = DEFAULT_SUBDIVISION

    def __post_init__(self):
        if not self.aa_width > 0:
            raise ValueError("aa_width must be positive")
        if self.subdivision < 1:
            raise ValueError("subdivision must be >= 1")

    def size_for(self, scene: Scene) -> tuple[int, int]:
        """Output ``(width, height)`` in pixels."""
        if self.resolution is None:
            return int(scene.width), int(scene.height)
        if isinstance(self.resolution, int):
            return self.resolution, self.resolution
        w, h = self.resolution
        return int(w), int(h)


@dataclass
class Raster:
    width: int
    height: int
    pixels: np.ndarray
    fill_rules: tuple[str, ...] = ()

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(f"pixels shape {self.pixels.shape} != {(self.height, self.width, 3)}")

    @classmethod
    def from_array(cls, pixels) -> "Raster":
        arr = np.asarray(pixels, dtype=float)
        return cls(arr.shape[1], arr.shape[0], arr)


@dataclass
class SceneGrad:
    """Gradient of a scalar w.r.t. every optimizable scalar of a Scene.

    ``points[k]`` is ``None`` for fixed squares; ``fill[k]`` (rgba) is
    ``None`` for strokes, whose color is fixed. The background has rgb only.
    """

    points: list[np.ndarray | None]
    fill: list[np.ndarray | None]
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def zeros_like(cls, scene: Scene) -> "SceneGrad":
        pts, fills = [], []
        for p in scene.paths:
            pts.append(None if p.kind is PathKind.FIXED_SQUARE else np.zeros_like(p.control_points))
            fills.append(None if p.kind is PathKind.OPEN_STROKED else np.zeros(4))
        return cls(pts, fills, np.zeros(3))

    def to_vector(self) -> np.ndarray:
        parts = []
        for p, f in zip(self.points, self.fill):
            if p is not None:
                parts.append(p.ravel())
            if f is not None:
                parts.append(f)
        parts.append(self.background)
        return np.concatenate(parts)

    @property
    def size(self) -> int:
        return self.to_vector().size


def pixel_centers(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:height, 0:width]
    return (xs.ravel() + 0.5).astype(float), (ys.ravel() + 0.5).astype(float)


class Rendering:
    """Forward render of a scene that keeps what the backward pass needs."""

    def __init__(self, scene: Scene, cfg: RenderConfig):
        self.scene = scene
        self.cfg = cfg
        width, height = cfg.size_for(scene)
        self.width, self.height = width, height
        self.scale = np.array([width / scene.width, height / scene.height])
        tau = cfg.aa_width
        n = cfg.subdivision
        paths = scene.paths
        n_px = width * height

        vert_list = [flatten_path(p, n) * self.scale for p in paths]
        counts = [len(v) for v in vert_list]
        self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.verts = np.concatenate(vert_list) if paths else np.zeros((0, 2))
        closed = np.array([p.closed for p in paths], dtype=np.bool_)
        evenodd = _kernels.self_intersections(self.verts, self.offsets, closed) if paths else np.zeros(0, np.bool_)
        self.fill_rules = tuple("evenodd" if e else "nonzero" for e in evenodd)

        qx, qy = pixel_centers(width, height)
        if paths:
            (self.dist, self.sign, self.edge_a, self.edge_b,
             self.tpar, self.dirx, self.diry) = _kernels.distance_field(qx, qy, self.verts, self.offsets, closed, evenodd)
        else:
            self.dist = np.zeros((0, n_px))
            self.sign = np.zeros((0, n_px), dtype=np.int8)

        half_width = np.array([0.5 * p.stroke_width * self.scale[0] if p.kind is PathKind.OPEN_STROKED else 0.0
                               for p in paths])
        with np.errstate(invalid="ignore"):
            sd = self.sign * self.dist - half_width[:, None]
        self.sd = sd
        self.cov = expit(-sd / tau)
        paint = np.array([p.paint.as_array() for p in paths]).reshape(-1, 4)
        self.paint_rgb = paint[:, :3]
        self.paint_a = paint[:, 3]
        self.alpha = self.cov * self.paint_a[:, None]

        img = np.broadcast_to(scene.background.rgb, (n_px, 3)).copy()
        for k in range(len(paths)):
            a = self.alpha[k][:, None]
            img = self.paint_rgb[k] * a + img * (1.0 - a)
        self.raster = Raster(width, height, img.reshape(height, width, 3), self.fill_rules)

    def boundary_distance(self) -> np.ndarray:
        """Per-pixel unsigned distance to the nearest path boundary, ``(H, W)``."""
        if not len(self.scene.paths):
            raise ValueError("scene has no paths")
        return np.min(np.abs(self.sd), axis=0).reshape(self.height, self.width)

    def backward(self, d_pixels: np.ndarray) -> SceneGrad:
        """Vector-Jacobian product of the render map with ``d_pixels``."""
        g = np.asarray(d_pixels, dtype=float)
        if g.shape != (self.height, self.width, 3):
            raise ValueError(f"upstream gradient shape {g.shape} does not match raster")
        scene = self.scene
        paths = scene.paths
        n_paths = len(paths)
        n_px = self.width * self.height
        g = g.reshape(n_px, 3)

        # u[k] = <g, composite below path k>; lets the reverse sweep skip storing composites
        u = np.empty((n_paths, n_px))
        img = np.broadcast_to(scene.background.rgb, (n_px, 3)).copy()
        for k in range(n_paths):
            u[k] = np.einsum("ij,ij->i", g, img)
            a = self.alpha[k][:, None]
            img = self.paint_rgb[k] * a + img * (1.0 - a)

        grad = SceneGrad.zeros_like(scene)
        d_sd = np.zeros((n_paths, n_px))
        trans = np.ones(n_px)  # product of (1 - alpha) over paths above
        for k in range(n_paths - 1, -1, -1):
            a = self.alpha[k]
            d_rgb = g.T @ (trans * a)
            d_a = trans * (g @ self.paint_rgb[k] - u[k])
            d_cov = d_a * self.paint_a[k]
            if grad.fill[k] is not None:
                grad.fill[k][:3] = d_rgb
                grad.fill[k][3] = d_a @ self.cov[k]
            cov = self.cov[k]
            d_sd[k] = d_cov * (-cov * (1.0 - cov) / self.cfg.aa_width)
            trans = trans * (1.0 - a)
        grad.background = g.T @ trans

        if n_paths:
            coef = d_sd * self.sign
            coef[~np.isfinite(self.dist)] = 0.0
            n_vert = len(self.verts)
            wa = coef * (1.0 - self.tpar)
            wb = coef * self.tpar
            ia, ib = self.edge_a.ravel(), self.edge_b.ravel()
            dvx = (np.bincount(ia, (wa * self.dirx).ravel(), n_vert)
                   + np.bincount(ib, (wb * self.dirx).ravel(), n_vert))
            dvy = (np.bincount(ia, (wa * self.diry).ravel(), n_vert)
                   + np.bincount(ib, (wb * self.diry).ravel(), n_vert))
            dv = np.stack([dvx, dvy], axis=1) * self.scale
            for k, p in enumerate(paths):
                if grad.points[k] is None:
                    continue
                mat = flatten_matrix(p, self.cfg.subdivision)
                grad.points[k] = mat.T @ dv[self.offsets[k]:self.offsets[k + 1]]
        return grad


def rasterize(scene: Scene, cfg: RenderConfig | None = None) -> Rendering:
    return Rendering(scene, cfg or RenderConfig())


def render(scene: Scene, cfg: RenderConfig | None = None) -> Raster:
    """Forward-only render; streams one path at a time to keep memory at O(pixels).

    Produces the same bytes as ``rasterize(scene, cfg).raster``.
    """
    cfg = cfg or RenderConfig()
    width, height = cfg.size_for(scene)
    scale = np.array([width / scene.width, height / scene.height])
    qx, qy = pixel_centers(width, height)
    img = np.broadcast_to(scene.background.rgb, (width * height, 3)).copy()
    rules = []
    for p in scene.paths:
        verts = flatten_path(p, cfg.subdivision) * scale
        offsets = np.array([0, len(verts)], dtype=np.int64)
        closed = np.array([p.closed], dtype=np.bool_)
        evenodd = _kernels.self_intersections(verts, offsets, closed)
        rules.append("evenodd" if evenodd[0] else "nonzero")
        dist, sign = _kernels.distance_field(qx, qy, verts, offsets, closed, evenodd)[:2]
        half = 0.5 * p.stroke_width * scale[0] if p.kind is PathKind.OPEN_STROKED else 0.0
        with np.errstate(invalid="ignore"):
            sd = sign[0] * dist[0] - half
        paint = p.paint.as_array()
        a = (expit(-sd / cfg.aa_width) * paint[3])[:, None]
        img = paint[:3] * a + img * (1.0 - a)
    return Raster(width, height, img.reshape(height, width, 3), tuple(rules))


def render_backward(scene: Scene, cfg: RenderConfig | None, d_loss_d_pixels: np.ndarray) -> SceneGrad:
    return rasterize(scene, cfg).backward(d_loss_d_pixels)
