"""Compiled inner loops for distance fields over many polylines."""

import numpy as np
from numba import njit


@njit(cache=True)
def self_intersections(verts, offsets, closed):
    """Per-polyline flag: does any pair of non-adjacent edges cross or touch."""
    n_paths = offsets.shape[0] - 1
    out = np.zeros(n_paths, dtype=np.bool_)
    for p in range(n_paths):
        v0 = offsets[p]
        nv = offsets[p + 1] - v0
        ne = nv if closed[p] else nv - 1
        found = False
        for i in range(ne):
            if found:
                break
            ax = verts[v0 + i, 0]
            ay = verts[v0 + i, 1]
            bx = verts[v0 + (i + 1) % nv, 0]
            by = verts[v0 + (i + 1) % nv, 1]
            for j in range(i + 2, ne):
                if closed[p] and i == 0 and j == ne - 1:
                    continue
                cx = verts[v0 + j, 0]
                cy = verts[v0 + j, 1]
                dx = verts[v0 + (j + 1) % nv, 0]
                dy = verts[v0 + (j + 1) % nv, 1]
                d1 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
                d2 = (bx - ax) * (dy - ay) - (by - ay) * (dx - ax)
                d3 = (dx - cx) * (ay - cy) - (dy - cy) * (ax - cx)
                d4 = (dx - cx) * (by - cy) - (dy - cy) * (bx - cx)
                if d1 == 0.0 and d2 == 0.0 and d3 == 0.0 and d4 == 0.0:
                    hit = (min(ax, bx) <= max(cx, dx) and min(cx, dx) <= max(ax, bx)
                           and min(ay, by) <= max(cy, dy) and min(cy, dy) <= max(ay, by))
                else:
                    hit = d1 * d2 <= 0.0 and d3 * d4 <= 0.0
                if hit:
                    found = True
                    break
        out[p] = found
    return out


@njit(cache=True)
def distance_field(qx, qy, verts, offsets, closed, evenodd):
    """Unsigned distance, inside sign and nearest-point data per (path, query).

    Returns ``(dist, sign, edge_a, edge_b, t, dirx, diry)`` where ``edge_a`` /
    ``edge_b`` are global vertex indices of the nearest edge, ``t`` the
    clamped parameter of the nearest point on it and ``dir`` the unit vector
    from the query to that point. Zero-length edges are skipped; a polyline
    with no usable edge reports infinite distance.
    """
    n_paths = offsets.shape[0] - 1
    nq = qx.shape[0]
    dist = np.empty((n_paths, nq))
    sign = np.ones((n_paths, nq), dtype=np.int8)
    edge_a = np.zeros((n_paths, nq), dtype=np.int64)
    edge_b = np.zeros((n_paths, nq), dtype=np.int64)
    tpar = np.zeros((n_paths, nq))
    dirx = np.zeros((n_paths, nq))
    diry = np.zeros((n_paths, nq))
    max_e = 0
    for p in range(n_paths):
        max_e = max(max_e, offsets[p + 1] - offsets[p])
    ax = np.empty(max_e)
    ay = np.empty(max_e)
    ex = np.empty(max_e)
    ey = np.empty(max_e)
    inv = np.empty(max_e)
    ib_of = np.empty(max_e, dtype=np.int64)
    for p in range(n_paths):
        v0 = offsets[p]
        nv = offsets[p + 1] - v0
        ne = nv if closed[p] else nv - 1
        for e in range(ne):
            ib = v0 + e + 1 if e + 1 < nv else v0
            ib_of[e] = ib
            ax[e] = verts[v0 + e, 0]
            ay[e] = verts[v0 + e, 1]
            ex[e] = verts[ib, 0] - ax[e]
            ey[e] = verts[ib, 1] - ay[e]
            len2 = ex[e] * ex[e] + ey[e] * ey[e]
            inv[e] = 1.0 / len2 if len2 > 0.0 else 0.0
        is_closed = closed[p]
        for q in range(nq):
            x = qx[q]
            y = qy[q]
            best = np.inf
            be = 0
            bt = 0.0
            bcx = 0.0
            bcy = 0.0
            wind = 0
            cross = 0
            for e in range(ne):
                rx = x - ax[e]
                ry = y - ay[e]
                if inv[e] > 0.0:
                    t = (rx * ex[e] + ry * ey[e]) * inv[e]
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                    dx = t * ex[e] - rx
                    dy = t * ey[e] - ry
                    d2 = dx * dx + dy * dy
                    if d2 < best:
                        best = d2
                        be = e
                        bt = t
                        bcx = dx
                        bcy = dy
                if is_closed:
                    by = ay[e] + ey[e]
                    if ay[e] <= y:
                        if by > y and ex[e] * ry - rx * ey[e] > 0.0:
                            wind += 1
                            cross += 1
                    elif by <= y and ex[e] * ry - rx * ey[e] < 0.0:
                        wind -= 1
                        cross += 1
            d = np.sqrt(best)
            dist[p, q] = d
            edge_a[p, q] = v0 + be
            edge_b[p, q] = ib_of[be]
            tpar[p, q] = bt
            if d > 0.0 and d < np.inf:
                dirx[p, q] = bcx / d
                diry[p, q] = bcy / d
            if is_closed:
                if evenodd[p]:
                    inside = cross % 2 == 1
                else:
                    inside = wind != 0
                if inside:
                    sign[p, q] = -1
    return dist, sign, edge_a, edge_b, tpar, dirx, diry
