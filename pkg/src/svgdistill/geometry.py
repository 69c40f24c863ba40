"""Vector primitives and the pure geometric queries built on them.

Paths are stored as flat arrays of control points. Closed paths with ``k``
cubic segments hold ``3k`` points (the last segment wraps back to point 0),
open strokes hold ``3k + 1`` points and fixed squares hold their 4 corners.
Curves are evaluated by flattening to polylines.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_SUBDIVISION = 16


class PathKind(enum.Enum):
    CLOSED_FILLED = "closed"
    OPEN_STROKED = "open"
    FIXED_SQUARE = "square"


@dataclass(frozen=True)
class Color:
    r: float
    g: float
    b: float
    a: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b, self.a], dtype=float)

    @property
    def rgb(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=float)

    @classmethod
    def from_array(cls, values) -> "Color":
        v = [float(x) for x in values]
        if len(v) == 3:
            v.append(1.0)
        return cls(*v)

    def clamped(self) -> "Color":
        return Color.from_array(np.clip(self.as_array(), 0.0, 1.0))


WHITE = Color(1.0, 1.0, 1.0, 1.0)
BLACK = Color(0.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class CubicSegment:
    p0: tuple[float, float]
    p1: tuple[float, float]
    p2: tuple[float, float]
    p3: tuple[float, float]

    def as_array(self) -> np.ndarray:
        return np.array([self.p0, self.p1, self.p2, self.p3], dtype=float)


@dataclass(eq=False)
class VectorPath:
    kind: PathKind
    control_points: np.ndarray
    fill: Color = BLACK
    stroke_width: float = 0.0
    stroke_color: Color = BLACK
    z_index: int = 0

    def __post_init__(self):
        pts = np.array(self.control_points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("control points must be finite")
        m = len(pts)
        if self.kind is PathKind.CLOSED_FILLED:
            if m < 3 or m % 3:
                raise ValueError(f"closed path needs 3k control points, got {m}")
            if self.stroke_width != 0.0:
                raise ValueError("closed filled paths carry no stroke")
        elif self.kind is PathKind.OPEN_STROKED:
            if m < 4 or m % 3 != 1:
                raise ValueError(f"open path needs 3k+1 control points, got {m}")
            if not self.stroke_width > 0:
                raise ValueError("open stroked paths need stroke_width > 0")
        elif self.kind is PathKind.FIXED_SQUARE:
            if m != 4:
                raise ValueError("fixed squares have exactly 4 corners")
        self.control_points = pts

    @property
    def closed(self) -> bool:
        return self.kind is not PathKind.OPEN_STROKED

    @property
    def n_segments(self) -> int:
        m = len(self.control_points)
        if self.kind is PathKind.CLOSED_FILLED:
            return m // 3
        if self.kind is PathKind.OPEN_STROKED:
            return (m - 1) // 3
        return 4

    @property
    def paint(self) -> Color:
        """Color actually composited for this path."""
        return self.stroke_color if self.kind is PathKind.OPEN_STROKED else self.fill

    def segments(self) -> list[CubicSegment]:
        """Cubic segments of a Bezier path; fixed squares have none."""
        if self.kind is PathKind.FIXED_SQUARE:
            return []
        pts = self.control_points
        m = len(pts)
        out = []
        for k in range(self.n_segments):
            idx = [3 * k, 3 * k + 1, 3 * k + 2, (3 * k + 3) % m if self.closed else 3 * k + 3]
            out.append(CubicSegment(*(tuple(pts[i]) for i in idx)))
        return out

    def copy(self, **changes) -> "VectorPath":
        changes.setdefault("control_points", self.control_points.copy())
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, VectorPath):
            return NotImplemented
        return (
            self.kind is other.kind
            and self.control_points.shape == other.control_points.shape
            and np.array_equal(self.control_points, other.control_points)
            and self.fill == other.fill
            and self.stroke_width == other.stroke_width
            and self.stroke_color == other.stroke_color
            and self.z_index == other.z_index
        )


@dataclass(eq=False)
class Scene:
    width: int
    height: int
    background: Color = WHITE
    paths: list[VectorPath] = field(default_factory=list)

    def __post_init__(self):
        if self.background.a != 1.0:
            self.background = replace(self.background, a=1.0)
        # stable sort keeps insertion order among equal z
        self.paths = sorted(self.paths, key=lambda p: p.z_index)

    def copy(self, **changes) -> "Scene":
        changes.setdefault("paths", [p.copy() for p in self.paths])
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.background == other.background
            and len(self.paths) == len(other.paths)
            and all(a == b for a, b in zip(self.paths, other.paths))
        )


# ---------------------------------------------------------------------------
# Flattening
# ---------------------------------------------------------------------------

def _bernstein(t: np.ndarray) -> np.ndarray:
    s = 1.0 - t
    return np.stack([s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t], axis=-1)


def flatten_segment(seg: CubicSegment, n: int) -> np.ndarray:
    """Sample a cubic at ``t = i/n`` for ``i = 0..n``; returns ``(n+1, 2)``."""
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    ctrl = seg.as_array()
    t = np.arange(n + 1) / n
    pts = _bernstein(t) @ ctrl
    pts[0] = ctrl[0]
    pts[-1] = ctrl[3]
    return pts


@functools.lru_cache(maxsize=256)
def _flatten_matrix_cached(kind: PathKind, n_ctrl: int, n: int) -> np.ndarray:
    if kind is PathKind.FIXED_SQUARE:
        mat = np.eye(4)
    else:
        closed = kind is PathKind.CLOSED_FILLED
        k = n_ctrl // 3 if closed else (n_ctrl - 1) // 3
        n_vert = k * n if closed else k * n + 1
        mat = np.zeros((n_vert, n_ctrl))
        basis = _bernstein(np.arange(n) / n)
        for s in range(k):
            cols = [3 * s, 3 * s + 1, 3 * s + 2, (3 * s + 3) % n_ctrl]
            rows = slice(s * n, (s + 1) * n)
            for j, c in enumerate(cols):
                mat[rows, c] += basis[:, j]
        if not closed:
            mat[-1, -1] = 1.0
    mat.setflags(write=False)
    return mat


def flatten_matrix(path: VectorPath, n: int = DEFAULT_SUBDIVISION) -> np.ndarray:
    """Linear map from control points to polyline vertices (``V = M @ P``).

    Closed paths yield ``k*n`` vertices forming a closed polygon; open paths
    yield ``k*n + 1`` vertices. Fixed squares map to their own corners.
    """
    return _flatten_matrix_cached(path.kind, len(path.control_points), int(n))


def flatten_path(path: VectorPath, n: int = DEFAULT_SUBDIVISION) -> np.ndarray:
    return flatten_matrix(path, n) @ path.control_points


# ---------------------------------------------------------------------------
# Area, self-intersection, distance
# ---------------------------------------------------------------------------

def path_area(path: VectorPath, n: int = DEFAULT_SUBDIVISION) -> float:
    """Absolute shoelace area of the flattened boundary, in px^2."""
    if path.kind is PathKind.OPEN_STROKED:
        raise ValueError("area is undefined for open stroked paths")
    v = flatten_path(path, n)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _edges(vertices: np.ndarray, closed: bool) -> tuple[np.ndarray, np.ndarray]:
    if closed:
        return vertices, np.roll(vertices, -1, axis=0)
    return vertices[:-1], vertices[1:]


def is_self_intersecting(vertices: np.ndarray, closed: bool = True) -> bool:
    """True when two non-adjacent polyline edges cross or touch."""
    a, b = _edges(np.asarray(vertices, dtype=float), closed)
    ne = len(a)
    if ne < 3:
        return False
    i, j = np.triu_indices(ne, k=2)
    if closed:
        keep = ~((i == 0) & (j == ne - 1))
        i, j = i[keep], j[keep]

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    d1 = orient(a[i], b[i], a[j])
    d2 = orient(a[i], b[i], b[j])
    d3 = orient(a[j], b[j], a[i])
    d4 = orient(a[j], b[j], b[i])
    collinear = (d1 == 0) & (d2 == 0) & (d3 == 0) & (d4 == 0)
    lo_i, hi_i = np.minimum(a[i], b[i]), np.maximum(a[i], b[i])
    lo_j, hi_j = np.minimum(a[j], b[j]), np.maximum(a[j], b[j])
    overlap = np.all((lo_i <= hi_j) & (lo_j <= hi_i), axis=-1)
    hit = np.where(collinear, overlap, (d1 * d2 <= 0) & (d3 * d4 <= 0))
    return bool(np.any(hit))


def _winding(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    """Nonzero winding number and crossing count of a closed polygon."""
    px, py = point
    up = (a[:, 1] <= py) & (b[:, 1] > py)
    down = (a[:, 1] > py) & (b[:, 1] <= py)
    side = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (px - a[:, 0]) * (b[:, 1] - a[:, 1])
    wind = int(np.sum(up & (side > 0)) - np.sum(down & (side < 0)))
    crossings = int(np.sum((up & (side > 0)) | (down & (side < 0))))
    return wind, crossings


def _polyline_distance(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    e = b - a
    len2 = np.einsum("ij,ij->i", e, e)
    valid = len2 > 0
    if not np.any(valid):
        return math.inf
    a, e, len2 = a[valid], e[valid], len2[valid]
    t = np.clip(np.einsum("ij,ij->i", point - a, e) / len2, 0.0, 1.0)
    c = a + t[:, None] * e
    return float(np.sqrt(np.min(np.sum((c - point) ** 2, axis=1))))


def signed_distance(point, path: VectorPath, n: int = DEFAULT_SUBDIVISION) -> float:
    """Signed distance from ``point`` to the flattened path boundary.

    Negative inside a filled region (nonzero rule, even-odd once the outline
    self-intersects). Strokes return distance to the centerline minus half
    the stroke width. Zero-length edges are ignored.
    """
    if n < 4 and path.kind is not PathKind.FIXED_SQUARE:
        raise ValueError("signed_distance needs n >= 4")
    q = np.asarray(point, dtype=float)
    v = flatten_path(path, n)
    a, b = _edges(v, path.closed)
    d = _polyline_distance(q, a, b)
    if path.kind is PathKind.OPEN_STROKED:
        return d - 0.5 * path.stroke_width
    wind, crossings = _winding(q, a, b)
    inside = (crossings % 2 == 1) if is_self_intersecting(v, True) else wind != 0
    return -d if inside else d


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def circle_control_points(center, radius: float, segments: int = 4) -> np.ndarray:
    """Closed cubic approximation of a circle with ``segments`` arcs."""
    cx, cy = center
    step = 2.0 * math.pi / segments
    k = 4.0 / 3.0 * math.tan(step / 4.0) * radius
    pts = []
    for s in range(segments):
        th = s * step
        th1 = th + step
        pts.append((cx + radius * math.cos(th), cy + radius * math.sin(th)))
        pts.append((cx + radius * math.cos(th) - k * math.sin(th), cy + radius * math.sin(th) + k * math.cos(th)))
        pts.append((cx + radius * math.cos(th1) + k * math.sin(th1), cy + radius * math.sin(th1) - k * math.cos(th1)))
    return np.array(pts)


def circle_path(center, radius: float, fill: Color, segments: int = 4, z_index: int = 0) -> VectorPath:
    return VectorPath(PathKind.CLOSED_FILLED, circle_control_points(center, radius, segments), fill=fill, z_index=z_index)


def polygon_path(corners, fill: Color, z_index: int = 0) -> VectorPath:
    """Closed path whose cubic segments are straight lines between corners."""
    c = np.asarray(corners, dtype=float)
    nxt = np.roll(c, -1, axis=0)
    pts = np.empty((3 * len(c), 2))
    pts[0::3] = c
    pts[1::3] = c + (nxt - c) / 3.0
    pts[2::3] = c + 2.0 * (nxt - c) / 3.0
    return VectorPath(PathKind.CLOSED_FILLED, pts, fill=fill, z_index=z_index)


def square_path(x0: float, y0: float, size: float, fill: Color, z_index: int = 0) -> VectorPath:
    corners = [(x0, y0), (x0 + size, y0), (x0 + size, y0 + size), (x0, y0 + size)]
    return VectorPath(PathKind.FIXED_SQUARE, np.array(corners), fill=fill, z_index=z_index)


def stroke_path(points, width: float, color: Color = BLACK, z_index: int = 0) -> VectorPath:
    return VectorPath(PathKind.OPEN_STROKED, np.asarray(points, dtype=float), stroke_width=width,
                      stroke_color=color, fill=color, z_index=z_index)


def rescale_scene(scene: Scene, width: int, height: int) -> Scene:
    """The same drawing on a ``width x height`` canvas; stroke widths scale with x."""
    sx, sy = width / scene.width, height / scene.height
    factor = np.array([sx, sy])
    paths = [p.copy(control_points=p.control_points * factor,
                    stroke_width=p.stroke_width * sx if p.stroke_width else 0.0) for p in scene.paths]
    return Scene(width, height, scene.background, paths)
