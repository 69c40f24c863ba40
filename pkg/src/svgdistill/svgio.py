"""Canonical SVG emission, a subset parser for it, and PPM/PNG raster I/O.

The emitted subset: one ``svg`` root with width/height/viewBox, a background
``rect``, then one ``path`` per VectorPath using only absolute M, C and Z
commands. Coordinates are printed with 3 decimals so files are diff-stable
and ``emit_svg(parse_svg(emit_svg(s))) == emit_svg(s)``.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .geometry import Color, PathKind, Scene, VectorPath
from .rasterizer import Raster

SVG_NS = "http://www.w3.org/2000/svg"
MAX_IMAGE_PIXELS = 1 << 26


class SvgError(ValueError):
    pass


def _num(x: float) -> str:
    s = f"{float(x):.3f}"
    return "0.000" if s == "-0.000" else s


def _hex(c: Color) -> str:
    r, g, b = (int(round(min(max(v, 0.0), 1.0) * 255)) for v in (c.r, c.g, c.b))
    return f"#{r:02X}{g:02X}{b:02X}"


def _pt(p) -> str:
    return f"{_num(p[0])} {_num(p[1])}"


def _path_data(path: VectorPath) -> str:
    pts = path.control_points
    if path.kind is PathKind.FIXED_SQUARE:
        nxt = np.roll(pts, -1, axis=0)
        segs = [(a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b) for a, b in zip(pts, nxt)]
        return f"M {_pt(pts[0])} " + " ".join(f"C {_pt(p)} {_pt(q)} {_pt(r)}" for p, q, r in segs) + " Z"
    parts = [f"M {_pt(pts[0])}"]
    for seg in path.segments():
        parts.append(f"C {_pt(seg.p1)} {_pt(seg.p2)} {_pt(seg.p3)}")
    if path.closed:
        parts.append("Z")
    return " ".join(parts)


def emit_svg(scene: Scene) -> str:
    w, h = scene.width, scene.height
    lines = [
        f'<svg xmlns="{SVG_NS}" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="{_hex(scene.background)}"/>',
    ]
    for p in scene.paths:
        d = _path_data(p)
        if p.kind is PathKind.OPEN_STROKED:
            c = p.stroke_color
            lines.append(f'<path d="{d}" fill="none" stroke="{_hex(c)}" stroke-opacity="{_num(c.a)}" '
                         f'stroke-width="{_num(p.stroke_width)}" stroke-linecap="round"/>')
        else:
            cls = ' class="fixed"' if p.kind is PathKind.FIXED_SQUARE else ""
            lines.append(f'<path{cls} d="{d}" fill="{_hex(p.fill)}" fill-opacity="{_num(p.fill.a)}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r"([A-Za-z])|([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)")


def _tokens(d: str) -> list:
    out = []
    pos = 0
    for m in _TOKEN.finditer(d):
        gap = d[pos:m.start()]
        if gap.strip(" \t\r\n,"):
            raise SvgError(f"unparseable path data near {gap.strip()!r}")
        out.append(m.group(1) if m.group(1) else float(m.group(2)))
        pos = m.end()
    if d[pos:].strip(" \t\r\n,"):
        raise SvgError(f"unparseable path data near {d[pos:].strip()!r}")
    return out


def _parse_d(d: str) -> tuple[np.ndarray, bool]:
    """Control points and closed flag from an M/C/Z path string."""
    toks = _tokens(d)
    pts: list[tuple[float, float]] = []
    closed = False
    i = 0
    cmd = None

    def take(k):
        nonlocal i
        vals = toks[i:i + k]
        if len(vals) < k or any(isinstance(v, str) for v in vals):
            raise SvgError(f"command {cmd} expects {k} numbers")
        i += k
        return vals

    while i < len(toks):
        tok = toks[i]
        if isinstance(tok, str):
            cmd = tok
            i += 1
            if cmd not in "MCZ":
                raise SvgError(f"unsupported path command {cmd!r}")
            if closed:
                raise SvgError("path data continues after Z")
            if cmd == "M":
                if pts:
                    raise SvgError("multiple subpaths are unsupported")
                x, y = take(2)
                pts.append((x, y))
            elif cmd == "Z":
                closed = True
            continue
        if cmd != "C":
            raise SvgError("coordinates outside a C command")
        v = take(6)
        pts += [(v[0], v[1]), (v[2], v[3]), (v[4], v[5])]
    if not pts:
        raise SvgError("empty path data")
    return np.array(pts), closed


def _color(attr: str | None, name: str) -> np.ndarray:
    if attr is None or not re.fullmatch(r"#[0-9A-Fa-f]{6}", attr):
        raise SvgError(f"{name} must be #RRGGBB, got {attr!r}")
    return np.array([int(attr[k:k + 2], 16) / 255.0 for k in (1, 3, 5)])


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_svg(text: str) -> Scene:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise SvgError(f"malformed XML: {e}") from None
    if _local(root.tag) != "svg":
        raise SvgError(f"unsupported root element {_local(root.tag)!r}")
    width = int(float(root.get("width", "0")))
    height = int(float(root.get("height", "0")))
    if width <= 0 or height <= 0:
        raise SvgError("svg width and height must be positive")
    background = Color(1.0, 1.0, 1.0)
    paths = []
    for k, el in enumerate(root):
        tag = _local(el.tag)
        if tag == "rect":
            if k != 0:
                raise SvgError("rect is only supported as the leading background")
            background = Color.from_array(_color(el.get("fill"), "rect fill"))
            continue
        if tag != "path":
            raise SvgError(f"unsupported element {tag!r}")
        pts, closed = _parse_d(el.get("d", ""))
        z = len(paths)
        if el.get("fill") == "none":
            if closed:
                raise SvgError("stroked closed paths are unsupported")
            rgb = _color(el.get("stroke"), "stroke")
            c = Color(*rgb, float(el.get("stroke-opacity", "1")))
            paths.append(VectorPath(PathKind.OPEN_STROKED, pts, fill=c, stroke_width=float(el.get("stroke-width", "1")),
                                    stroke_color=c, z_index=z))
            continue
        if not closed:
            raise SvgError("filled paths must be closed with Z")
        fill = Color(*_color(el.get("fill"), "fill"), float(el.get("fill-opacity", "1")))
        if "fixed" in el.get("class", "").split():
            if len(pts) != 13:
                raise SvgError("fixed squares need exactly 4 straight segments")
            paths.append(VectorPath(PathKind.FIXED_SQUARE, pts[0:12:3], fill=fill, z_index=z))
        else:
            if len(pts) < 4 or (len(pts) - 1) % 3:
                raise SvgError("closed path has an incomplete cubic segment")
            # the last segment ends on the first point
            paths.append(VectorPath(PathKind.CLOSED_FILLED, pts[:-1], fill=fill, z_index=z))
    return Scene(width, height, background, paths)


def write_svg(scene: Scene, path) -> None:
    Path(path).write_text(emit_svg(scene), encoding="utf-8")


def read_svg(path) -> Scene:
    return parse_svg(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Raster files
# ---------------------------------------------------------------------------

def quantize(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def _ppm_header(data: bytes) -> tuple[int, int, int, int]:
    """(width, height, maxval, offset of pixel data)."""
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("malformed PPM header: truncated")
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise ValueError(f"malformed PPM header: magic {fields[0]!r} is not P6")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise ValueError("malformed PPM header: non-integer field") from None
    if w <= 0 or h <= 0 or not 0 < maxval < 256:
        raise ValueError("malformed PPM header: bad dimensions or maxval")
    if w * h > MAX_IMAGE_PIXELS:
        raise ValueError(f"image dimensions {w}x{h} overflow the {MAX_IMAGE_PIXELS} pixel limit")
    return w, h, maxval, pos + 1


def decode_ppm(data: bytes) -> Raster:
    w, h, maxval, off = _ppm_header(data)
    body = data[off:off + w * h * 3]
    if len(body) != w * h * 3:
        raise ValueError("PPM pixel data is truncated")
    px = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    return Raster(w, h, px.astype(float) / maxval)


def encode_ppm(raster: Raster) -> bytes:
    return f"P6\n{raster.width} {raster.height}\n255\n".encode("ascii") + quantize(raster.pixels).tobytes()


def read_image(path) -> Raster:
    data = Path(path).read_bytes()
    if data[:2] == b"P6":
        return decode_ppm(data)
    from PIL import Image

    with Image.open(path) as im:
        if im.width * im.height > MAX_IMAGE_PIXELS:
            raise ValueError("image dimensions overflow")
        px = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return Raster(px.shape[1], px.shape[0], px.astype(float) / 255.0)


def write_image(raster: Raster, path, fmt: str | None = None) -> None:
    fmt = (fmt or Path(path).suffix.lstrip(".") or "ppm").lower()
    if fmt == "ppm":
        Path(path).write_bytes(encode_ppm(raster))
    elif fmt == "png":
        from PIL import Image

        Image.fromarray(quantize(raster.pixels), "RGB").save(path, format="PNG")
    else:
        raise ValueError(f"unsupported image format {fmt!r}")
