#
# bpseg is a bounded-polygon weakly-supervised segmentation toolkit.
# This file is part of bpseg.
#
# Copyright (C) 2024 bpseg contributors
#
#    bpseg is free software: you can redistribute it and/or modify
#    it under the terms of the GNU General Public License as published by
#    the Free Software Foundation, either version 3 of the License, or
#    (at your option) any later version.
#
#    This program is distributed in the hope that it will be useful,
#    but WITHOUT ANY WARRANTY; without even the implied warranty of
#    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#    GNU General Public License for more details.
#
#    You should have received a copy of the GNU General Public License
#    along with this program.  If not, see <https://www.gnu.org/licenses/>.
#

import numpy as np

__all__ = ["rasterize_polygon", "point_segment_distance",
           "polygon_is_simple"]

# number of (pixel, edge) pairs evaluated at once while rasterizing
CHUNK = 1 << 21

ON_EDGE_TOL = 1e-9


def rasterize_polygon(vertices, height, width):
    """Rasterizes a closed polygon into an H×W {0,1} mask.

    A pixel belongs to the polygon iff its center is inside by the even-odd
    rule, centers lying on an edge count as inside. Pixel (r, c) has its
    center at (c + 0.5, r + 0.5) in polygon coordinates.

    Args:
        vertices:
            (K, 2) array-like of (x, y) vertices, the last one connecting
            back to the first.
        height:
            mask height in pixels.
        width:
            mask width in pixels.

    Returns:
        np.uint8 array of shape (height, width).
    """
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
    x1, y1 = v[:, 0], v[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)

    out = np.zeros((height, width), dtype=np.uint8)
    if len(v) < 3:
        return out

    xs = np.arange(width, dtype=np.float64) + 0.5
    rows_per_chunk = max(1, CHUNK // max(1, width * len(v)))

    dx = x2 - x1
    dy = y2 - y1
    seg_len2 = dx * dx + dy * dy

    for r0 in range(0, height, rows_per_chunk):
        r1 = min(height, r0 + rows_per_chunk)
        ys = np.arange(r0, r1, dtype=np.float64) + 0.5
        px, py = np.meshgrid(xs, ys)
        px = px.reshape(-1, 1)
        py = py.reshape(-1, 1)

        straddle = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = x1 + (py - y1) * dx / dy
        crossings = np.count_nonzero(straddle & (px < x_cross), axis=1)
        inside = crossings % 2 == 1

        cross = dx * (py - y1) - dy * (px - x1)
        dot = (px - x1) * dx + (py - y1) * dy
        on_edge = (np.abs(cross) <= ON_EDGE_TOL * np.sqrt(seg_len2) + 1e-12) \
            & (dot >= -ON_EDGE_TOL) & (dot <= seg_len2 + ON_EDGE_TOL)
        inside |= on_edge.any(axis=1)

        out[r0:r1] = inside.reshape(r1 - r0, width)

    return out


def point_segment_distance(points, a, b):
    """Euclidean distance from each point to the segment ab.

    Args:
        points:
            (N, 2) array of points.
        a, b:
            segment end points as length 2 arrays.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    len2 = float(ab @ ab)
    if len2 == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip(((points - a) @ ab) / len2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def _orient(p, q, r):
    val = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    if abs(val) <= 1e-12:
        return 0
    return 1 if val > 0 else -1


def _on_segment(p, q, r):
    return min(p[0], r[0]) - 1e-12 <= q[0] <= max(p[0], r[0]) + 1e-12 and \
        min(p[1], r[1]) - 1e-12 <= q[1] <= max(p[1], r[1]) + 1e-12


def _segments_intersect(p1, p2, p3, p4):
    o1 = _orient(p1, p2, p3)
    o2 = _orient(p1, p2, p4)
    o3 = _orient(p3, p4, p1)
    o4 = _orient(p3, p4, p2)

    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(p1, p3, p2):
        return True
    if o2 == 0 and _on_segment(p1, p4, p2):
        return True
    if o3 == 0 and _on_segment(p3, p1, p4):
        return True
    if o4 == 0 and _on_segment(p3, p2, p4):
        return True
    return False


def polygon_is_simple(vertices):
    """Checks that no two non-adjacent edges of a closed polygon touch."""
    v = [tuple(p) for p in np.asarray(vertices, dtype=np.float64)]
    n = len(v)
    if n < 3:
        return False
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            # adjacent edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            b1, b2 = v[j], v[(j + 1) % n]
            if _segments_intersect(a1, a2, b1, b2):
                return False
    return True
