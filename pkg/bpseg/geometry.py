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

from .const import (LIB_NAME, OUTSIDE, BAND, INSIDE, DEFAULT_RADIUS,
                    DEFAULT_EPSILON, DEFAULT_VERTEX_CAP)
from .exceptions import (ErosionEmptyError, MultiComponentError,
                         DegenerateError, NoForegroundError,
                         ShapeMismatchError)
from .raster import (rasterize_polygon, point_segment_distance,
                     polygon_is_simple)

import logging
from collections import namedtuple

import numpy as np
from scipy import ndimage
from skimage.draw import line as draw_line
from skimage.morphology import disk

__all__ = ["Polygon", "BoundedPolygonAnnotation", "RegionPartition",
           "Scribble", "as_mask", "check_bounded_masks",
           "partition_from_masks", "largest_component", "dilate_erode",
           "trace_contour", "douglas_peucker", "make_bpanno",
           "make_bounded_shape", "make_partition", "make_scribble",
           "make_box", "make_rectangle_mask", "jitter_box", "box_to_mask",
           "annotation_to_json", "annotation_from_json"]

logger = logging.getLogger(LIB_NAME)

MIN_MASK_SIZE = 8

ELLIPSE_VERTICES = 32
SIMPLIFY_STEPS = 24

Scribble = namedtuple("Scribble", ("foreground", "background", "lines"))

# 4-connectivity used for every component decision
FOUR = ndimage.generate_binary_structure(2, 1)


class Polygon:
    """Closed polygon on the pixel-corner lattice.

    Pixel (r, c) covers [c, c+1) × [r, r+1), so vertices of a polygon
    traced around a mask lie in [0, W] × [0, H].

    Attributes:
        vertices:
            (K, 2) float64 array of (x, y) vertices in order.
        closed:
            Always True, the last vertex connects back to the first.
    """
    def __init__(self, vertices):
        vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
        if len(vertices) < 3:
            raise DegenerateError(
                f"polygon needs >= 3 vertices, got {len(vertices)}",
                "geometry.Polygon"
            )
        step = np.roll(vertices, -1, axis=0) - vertices
        if not np.all(np.any(step != 0, axis=1)):
            raise DegenerateError("polygon has repeated consecutive vertices",
                                  "geometry.Polygon")
        self.vertices = vertices
        self.closed = True

    def rasterize(self, height, width):
        return rasterize_polygon(self.vertices, height, width)

    def is_simple(self):
        return polygon_is_simple(self.vertices)

    def to_list(self):
        return [[float(x), float(y)] for x, y in self.vertices]

    def __len__(self):
        return len(self.vertices)

    def __eq__(self, other):
        return isinstance(other, Polygon) and \
            self.vertices.shape == other.vertices.shape and \
            np.array_equal(self.vertices, other.vertices)

    def __repr__(self):
        return f"<Polygon ({len(self)} vertices)>"


class BoundedPolygonAnnotation:
    """Inscribed and envelope polygons plus their rasterized masks.

    Attributes:
        inscribed:
            Polygon lying inside the lesion.
        envelope:
            Polygon enclosing the lesion.
        inscribed_mask:
            y^in, rasterized inscribed polygon.
        envelope_mask:
            y^en, rasterized envelope polygon.
    """
    def __init__(self, inscribed, envelope, inscribed_mask=None,
                 envelope_mask=None, shape=None):
        if inscribed_mask is None or envelope_mask is None:
            if shape is None:
                raise ValueError("shape is required to rasterize polygons")
            inscribed_mask = inscribed.rasterize(*shape)
            envelope_mask = envelope.rasterize(*shape)

        self.inscribed = inscribed
        self.envelope = envelope
        self.inscribed_mask, self.envelope_mask = check_bounded_masks(
            inscribed_mask, envelope_mask
        )

    @property
    def shape(self):
        return self.inscribed_mask.shape

    def vertex_count(self):
        return len(self.inscribed) + len(self.envelope)

    def __repr__(self):
        return (f"<BoundedPolygonAnnotation {self.shape} "
                f"({len(self.inscribed)}/{len(self.envelope)} vertices)>")


class RegionPartition:
    """Per pixel split into certain foreground, uncertain band and certain
    background.

    Attributes:
        region_label:
            H×W uint8 grid over {OUTSIDE, BAND, INSIDE}.
        uncertain_mask:
            M_u, 1 exactly on BAND pixels.
        class_label:
            y^c, 0 on OUTSIDE, 1 on BAND, 2 on INSIDE.
    """
    def __init__(self, region_label):
        self.region_label = np.asarray(region_label, dtype=np.uint8)
        self.uncertain_mask = (self.region_label == BAND).astype(np.uint8)
        self.class_label = self.region_label.astype(np.int64)

    def counts(self):
        return {
            "inside": int(np.count_nonzero(self.region_label == INSIDE)),
            "band": int(np.count_nonzero(self.region_label == BAND)),
            "outside": int(np.count_nonzero(self.region_label == OUTSIDE)),
        }

    def certain_label(self):
        """1 on INSIDE, 0 elsewhere."""
        return (self.region_label == INSIDE).astype(np.uint8)


def check_bounded_masks(inscribed_mask, envelope_mask,
                        operation="geometry.make_bpanno"):
    """Checks y^in ⊆ y^en, both nonempty and a nonempty band between them.

    Returns:
        the two masks as uint8 arrays.

    Raises:
        ShapeMismatchError, DegenerateError
    """
    inscribed_mask = as_mask(inscribed_mask, operation)
    envelope_mask = as_mask(envelope_mask, operation)

    if inscribed_mask.shape != envelope_mask.shape:
        raise ShapeMismatchError("inscribed and envelope masks differ in "
                                 "shape", operation)
    if not inscribed_mask.any():
        raise DegenerateError("inscribed mask is empty", operation)
    if np.any(inscribed_mask > envelope_mask):
        raise DegenerateError("inscribed mask is not inside envelope",
                              operation)
    if not np.any(envelope_mask > inscribed_mask):
        raise DegenerateError("uncertain band is empty", operation)
    return inscribed_mask, envelope_mask


def partition_from_masks(inscribed_mask, envelope_mask):
    """Builds the RegionPartition of a y^in / y^en pair."""
    region = np.full(np.shape(inscribed_mask), OUTSIDE, dtype=np.uint8)
    region[np.asarray(envelope_mask) == 1] = BAND
    region[np.asarray(inscribed_mask) == 1] = INSIDE
    return RegionPartition(region)


def as_mask(mask, operation="geometry"):
    """Validates a BinaryMask and returns it as a uint8 array."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"mask must be 2D, got shape {arr.shape}",
                                 operation)
    if min(arr.shape) < MIN_MASK_SIZE:
        raise ShapeMismatchError(
            f"mask must be at least {MIN_MASK_SIZE}x{MIN_MASK_SIZE}, "
            f"got {arr.shape}", operation
        )
    if arr.dtype != np.bool_ and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("mask values must be 0 or 1")
    return arr.astype(np.uint8)


def largest_component(mask, operation="geometry.largest_component"):
    """Keeps the largest 4-connected component of the mask."""
    mask = as_mask(mask, operation)
    labels, n = ndimage.label(mask, structure=FOUR)
    if n == 0:
        raise NoForegroundError("mask has no foreground pixel", operation)
    if n == 1:
        return mask

    sizes = np.bincount(labels.ravel())[1:]
    keep = int(np.argmax(sizes)) + 1
    logger.warning(f"Mask has {n} components, keeping the largest "
                   f"({sizes[keep - 1]} of {int(sizes.sum())} pixels)")
    return (labels == keep).astype(np.uint8)


def dilate_erode(mask, radius):
    """Dilates and erodes a mask with a disk structuring element.

    Returns:
        A tuple of (dilated, eroded) masks. Dilation is clipped by the image
        bounds, pixels beyond the bounds count as background for erosion.

    Raises:
        ErosionEmptyError:
            if erosion removes every foreground pixel.
    """
    mask = as_mask(mask, "geometry.dilate_erode")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    if not mask.any():
        raise NoForegroundError("mask has no foreground pixel",
                                "geometry.dilate_erode")

    selem = disk(int(radius)).astype(bool)
    dilated = ndimage.binary_dilation(mask, structure=selem)
    eroded = ndimage.binary_erosion(mask, structure=selem)

    if not eroded.any():
        raise ErosionEmptyError(
            f"erosion with radius {radius} leaves an empty mask",
            "geometry.dilate_erode"
        )

    return dilated.astype(np.uint8), eroded.astype(np.uint8)


def trace_contour(mask):
    """Traces the outer boundary of a single component along pixel edges.

    Holes are filled first, so rasterizing the result reproduces the filled
    mask exactly. Collinear vertices are merged.

    Raises:
        MultiComponentError:
            if the mask doesn't have exactly one 4-connected component.
    """
    mask = as_mask(mask, "geometry.trace_contour")
    _, n = ndimage.label(mask, structure=FOUR)
    if n != 1:
        raise MultiComponentError(
            f"expected one 4-connected component, found {n}",
            "geometry.trace_contour", n
        )

    filled = ndimage.binary_fill_holes(mask, structure=FOUR)
    padded = np.pad(filled, 1)
    core = padded[1:-1, 1:-1]
    rows, cols = np.nonzero(core)

    # Directed edges with the foreground on their right-hand side
    # (y grows downward), one per foreground/background pixel side.
    sides = (
        (padded[:-2, 1:-1], (0, 0), (1, 0)),
        (padded[1:-1, 2:], (1, 0), (1, 1)),
        (padded[2:, 1:-1], (1, 1), (0, 1)),
        (padded[1:-1, :-2], (0, 1), (0, 0)),
    )
    nxt = {}
    for neighbour, (sx, sy), (ex, ey) in sides:
        open_side = ~neighbour[rows, cols]
        for r, c in zip(rows[open_side], cols[open_side]):
            start = (int(c) + sx, int(r) + sy)
            if start in nxt:
                raise DegenerateError("boundary touches itself at "
                                      f"{start}", "geometry.trace_contour")
            nxt[start] = (int(c) + ex, int(r) + ey)

    first = min(nxt, key=lambda p: (p[1], p[0]))
    chain = [first]
    current = nxt[first]
    while current != first:
        chain.append(current)
        current = nxt[current]

    return Polygon(_merge_collinear(np.asarray(chain, dtype=np.float64)))


def _merge_collinear(points):
    prev = np.roll(points, 1, axis=0)
    after = np.roll(points, -1, axis=0)
    d1 = points - prev
    d2 = after - points
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    dot = (d1 * d2).sum(axis=1)
    keep = ~((np.abs(cross) < 1e-12) & (dot > 0))
    return points[keep]


def douglas_peucker(poly, epsilon):
    """Simplifies a closed polygon with the Douglas-Peucker algorithm.

    The ring is split at the first vertex and the vertex farthest from it,
    both chains are simplified independently. The output is a subsequence of
    the input vertices, and every dropped vertex lies within epsilon of the
    output edge that replaced it.

    Raises:
        DegenerateError:
            if fewer than 3 vertices survive.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    points = poly.vertices
    if epsilon == 0:
        return Polygon(points.copy())

    n = len(points)
    split = int(np.argmax(np.linalg.norm(points - points[0], axis=1)))
    keep = np.zeros(n + 1, dtype=bool)
    ring = np.vstack([points, points[:1]])
    keep[[0, split, n]] = True

    stack = [(0, split), (split, n)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        dist = point_segment_distance(ring[lo + 1:hi], ring[lo], ring[hi])
        idx = int(np.argmax(dist))
        if dist[idx] > epsilon:
            mid = lo + 1 + idx
            keep[mid] = True
            stack.append((lo, mid))
            stack.append((mid, hi))

    kept = ring[:n][keep[:n]]
    if len(kept) < 3:
        raise DegenerateError(
            f"simplification with epsilon {epsilon} leaves "
            f"{len(kept)} vertices", "geometry.douglas_peucker"
        )
    return Polygon(kept)


def _simplify_capped(contour, epsilon, vertex_cap, steps=SIMPLIFY_STEPS):
    """Simplifies with about the smallest epsilon >= the given one that
    respects the vertex cap.

    Epsilon is doubled until the polygon fits the cap or collapses, then a
    fixed number of bisection steps between the last over-cap epsilon and
    the first fitting or collapsing one keeps the best fit. If the given
    epsilon already collapses the polygon, the search runs below it.

    Raises:
        DegenerateError:
            if no tried epsilon leaves between 3 and vertex_cap vertices.
    """
    def attempt(eps):
        try:
            return douglas_peucker(contour, eps)
        except DegenerateError:
            return None

    best = None
    lo = hi = float(epsilon)
    poly = attempt(hi)
    if poly is not None and len(poly) <= vertex_cap:
        return poly

    if poly is None:
        lo = 0.0
    else:
        hi = max(hi, 0.5)
        for _ in range(steps):
            lo, hi = hi, hi * 2
            poly = attempt(hi)
            if poly is None or len(poly) <= vertex_cap:
                best = poly
                break
        else:
            raise DegenerateError(
                f"epsilon {hi} still leaves more than {vertex_cap} vertices",
                "geometry.make_bpanno"
            )

    for _ in range(steps):
        mid = (lo + hi) / 2
        poly = attempt(mid)
        if poly is None:
            hi = mid
        elif len(poly) > vertex_cap:
            lo = mid
        else:
            best, hi = poly, mid

    if best is None:
        raise DegenerateError(
            f"no epsilon simplifies the contour to {vertex_cap} vertices "
            "or fewer", "geometry.make_bpanno"
        )
    return best


def _fit_polygon(source, gt, epsilon, vertex_cap, rounds, inner):
    """Fits a capped polygon to a source mask, keeping containment with gt.

    Whenever the rasterized polygon breaks containment (or isn't simple),
    the source is intersected with (inner) or united with (outer) the
    raster, shrunk or grown by one pixel and traced again.
    """
    height, width = gt.shape
    step = disk(1).astype(bool)
    kind = "inscribed" if inner else "envelope"

    for attempt in range(rounds):
        poly = _simplify_capped(trace_contour(source), epsilon, vertex_cap)
        raster = poly.rasterize(height, width)

        if inner:
            contained = raster.any() and not np.any(raster > gt)
        else:
            contained = not np.any(gt > raster)
        if contained and poly.is_simple():
            return poly, raster

        logger.warning(f"Repairing {kind} polygon, round {attempt + 1}")
        if inner:
            source = ndimage.binary_erosion(raster & source, structure=step)
            if not source.any():
                raise ErosionEmptyError(
                    "inscribed polygon repair emptied the mask",
                    "geometry.make_bpanno"
                )
        else:
            source = ndimage.binary_dilation(raster | source, structure=step)
        source = largest_component(source.astype(np.uint8))

    poly = trace_contour(source)
    if len(poly) <= vertex_cap:
        logger.warning(f"Using the exact {kind} contour after {rounds} "
                       "repair rounds")
        return poly, poly.rasterize(height, width)
    raise DegenerateError(
        f"{kind} polygon still breaks containment after {rounds} repair "
        f"rounds and its exact contour has more than {vertex_cap} vertices",
        "geometry.make_bpanno"
    )


def _prepare_gt(mask, operation):
    gt = largest_component(mask, operation)
    filled = ndimage.binary_fill_holes(gt, structure=FOUR).astype(np.uint8)
    if np.any(filled != gt):
        logger.warning("Filling holes of the lesion mask")
    return filled


def make_bpanno(mask, radius=DEFAULT_RADIUS, epsilon=DEFAULT_EPSILON,
                vertex_cap=DEFAULT_VERTEX_CAP, repair_rounds=8):
    """Generates a bounded polygon annotation from a dense mask.

    The dilated and eroded masks are traced, simplified with Douglas-Peucker
    under the vertex cap, and repaired until inscribed ⊆ gt ⊆ envelope holds
    pixelwise.

    Args:
        mask:
            ground truth binary mask, the largest component is used.
        radius:
            disk radius of the dilation/erosion.
        epsilon:
            Douglas-Peucker tolerance in pixels.
        vertex_cap:
            maximum vertex count per polygon.
        repair_rounds:
            containment repair rounds before trying the exact contours.

    Raises:
        ErosionEmptyError:
            if repairing the inscribed polygon empties the mask.
        DegenerateError:
            if no polygon within the vertex cap keeps containment.
        NoForegroundError:
            if the mask is empty.
    """
    gt = _prepare_gt(mask, "geometry.make_bpanno")
    dilated, eroded = dilate_erode(gt, radius)
    eroded = largest_component(eroded)

    inscribed, in_mask = _fit_polygon(eroded, gt, epsilon, vertex_cap,
                                      repair_rounds, inner=True)
    envelope, en_mask = _fit_polygon(dilated, gt, epsilon, vertex_cap,
                                     repair_rounds, inner=False)

    return BoundedPolygonAnnotation(inscribed, envelope, in_mask, en_mask)


def _rect_polygon(r0, c0, r1, c1):
    """Polygon covering pixel rows r0..r1 and cols c0..c1 inclusive."""
    return Polygon([(c0, r0), (c1 + 1, r0), (c1 + 1, r1 + 1), (c0, r1 + 1)])


def _largest_inner_rectangle(mask):
    dist = ndimage.distance_transform_edt(mask)
    r, c = np.unravel_index(int(np.argmax(dist)), mask.shape)
    r0 = r1 = int(r)
    c0 = c1 = int(c)
    height, width = mask.shape

    grown = True
    while grown:
        grown = False
        if r0 > 0 and mask[r0 - 1, c0:c1 + 1].all():
            r0 -= 1
            grown = True
        if c1 < width - 1 and mask[r0:r1 + 1, c1 + 1].all():
            c1 += 1
            grown = True
        if r1 < height - 1 and mask[r1 + 1, c0:c1 + 1].all():
            r1 += 1
            grown = True
        if c0 > 0 and mask[r0:r1 + 1, c0 - 1].all():
            c0 -= 1
            grown = True

    return _rect_polygon(r0, c0, r1, c1)


def _ellipse_polygon(center, axes, scale, height, width):
    theta = np.linspace(0, 2 * np.pi, ELLIPSE_VERTICES, endpoint=False)
    unit = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    points = center + scale * unit @ axes
    points[:, 0] = np.clip(points[:, 0], 0, width)
    points[:, 1] = np.clip(points[:, 1], 0, height)
    # clipping can merge neighbours on the image border
    step = np.roll(points, -1, axis=0) - points
    points = points[np.any(np.abs(step) > 1e-9, axis=1)]
    return Polygon(points)


def _moment_axes(mask):
    rows, cols = np.nonzero(mask)
    xy = np.stack([cols + 0.5, rows + 0.5], axis=1).astype(np.float64)
    center = xy.mean(axis=0)
    cov = np.cov(xy, rowvar=False) + np.eye(2) * 1e-6
    evals, evecs = np.linalg.eigh(cov)
    # rows are the semi-axis vectors (2σ along each principal direction)
    axes = (2.0 * np.sqrt(evals))[:, None] * evecs.T
    return center, axes


def make_bounded_shape(mask, radius=DEFAULT_RADIUS, shape="rectangle"):
    """Generates a bounded rectangle or bounded ellipse annotation.

    Rectangle: the tight box of the dilated mask encloses the lesion, the
    largest axis-aligned rectangle grown from the distance transform peak of
    the eroded mask lies inside. Ellipse: the moment ellipse of the lesion is
    scaled up until it covers the dilated mask and down until it fits the
    eroded mask.
    """
    operation = "geometry.make_bounded_shape"
    gt = _prepare_gt(mask, operation)
    height, width = gt.shape
    dilated, eroded = dilate_erode(gt, radius)
    eroded = largest_component(eroded)

    if shape == "rectangle":
        (x0, y0), (x1, y1) = make_box(dilated)
        envelope = _rect_polygon(y0, x0, y1, x1)
        inscribed = _largest_inner_rectangle(eroded)
        return BoundedPolygonAnnotation(inscribed, envelope,
                                        shape=(height, width))

    if shape != "ellipse":
        raise ValueError(f"unknown bounded shape '{shape}'")

    center, axes = _moment_axes(gt)

    scale = 1.0
    for _ in range(400):
        envelope = _ellipse_polygon(center, axes, scale, height, width)
        en_mask = envelope.rasterize(height, width)
        if not np.any(dilated > en_mask):
            break
        scale *= 1.05
    else:
        envelope = _rect_polygon(0, 0, height - 1, width - 1)
        en_mask = envelope.rasterize(height, width)

    scale = 1.0
    for _ in range(200):
        try:
            inscribed = _ellipse_polygon(center, axes, scale, height, width)
        except DegenerateError:
            break
        in_mask = inscribed.rasterize(height, width)
        if not in_mask.any():
            break
        if not np.any(in_mask > eroded):
            return BoundedPolygonAnnotation(inscribed, envelope, in_mask,
                                            en_mask)
        scale *= 0.95

    raise ErosionEmptyError("no inscribed ellipse fits the eroded mask",
                            operation)


def make_partition(anno):
    """Splits the image into INSIDE (y^in), BAND (y^en - y^in), OUTSIDE."""
    return partition_from_masks(anno.inscribed_mask, anno.envelope_mask)


def make_scribble(mask, n_lines=1, thickness=2, rng_seed=0):
    """Simulates scribbles by joining random end points of each class.

    For each class, n_lines lines are drawn between two pixels sampled from
    that class, thickened by a square of the given size and clipped to the
    class region.

    Returns:
        Scribble namedtuple of (foreground, background, lines), lines being
        a list of (label, (x0, y0), (x1, y1)) in pixel indices.

    Raises:
        NoForegroundError:
            if the mask has no foreground pixel.
    """
    mask = as_mask(mask, "geometry.make_scribble")
    if n_lines < 1:
        raise ValueError(f"n_lines must be >= 1, got {n_lines}")
    if not mask.any():
        raise NoForegroundError("mask has no foreground pixel",
                                "geometry.make_scribble")

    rng = np.random.default_rng(rng_seed)
    selem = np.ones((thickness, thickness), dtype=bool)
    lines = []
    out = {}

    for label in (1, 0):
        region = mask == label
        rows, cols = np.nonzero(region)
        drawn = np.zeros(mask.shape, dtype=bool)
        if len(rows) == 0:
            logger.warning(f"No pixel of class {label} to scribble on")
            out[label] = drawn.astype(np.uint8)
            continue

        for _ in range(n_lines):
            i, j = rng.integers(0, len(rows), size=2)
            rr, cc = draw_line(rows[i], cols[i], rows[j], cols[j])
            drawn[rr, cc] = True
            lines.append((label, (int(cols[i]), int(rows[i])),
                          (int(cols[j]), int(rows[j]))))

        if thickness > 1:
            drawn = ndimage.binary_dilation(drawn, structure=selem)
        out[label] = (drawn & region).astype(np.uint8)

    return Scribble(out[1], out[0], lines)


def make_box(mask):
    """Returns the tight bounding box as ((x0, y0), (x1, y1)), inclusive."""
    mask = as_mask(mask, "geometry.make_box")
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        raise NoForegroundError("mask has no foreground pixel",
                                "geometry.make_box")
    return (int(cols.min()), int(rows.min())), \
        (int(cols.max()), int(rows.max()))


def box_to_mask(box, height, width):
    (x0, y0), (x1, y1) = box
    out = np.zeros((height, width), dtype=np.uint8)
    out[y0:y1 + 1, x0:x1 + 1] = 1
    return out


def make_rectangle_mask(mask):
    """Fills the tight bounding box of the mask."""
    mask = as_mask(mask, "geometry.make_rectangle_mask")
    return box_to_mask(make_box(mask), *mask.shape)


def jitter_box(box, jitter, rng, height, width):
    """Moves every box side by up to jitter pixels, staying in the image."""
    if jitter <= 0:
        return box
    (x0, y0), (x1, y1) = box
    dx0, dy0, dx1, dy1 = rng.integers(-jitter, jitter + 1, size=4)
    x0 = int(np.clip(x0 + dx0, 0, width - 1))
    y0 = int(np.clip(y0 + dy0, 0, height - 1))
    x1 = int(np.clip(x1 + dx1, x0, width - 1))
    y1 = int(np.clip(y1 + dy1, y0, height - 1))
    return (x0, y0), (x1, y1)


def annotation_to_json(anno, image_id, kind="bpanno"):
    height, width = anno.shape
    return {
        "image_id": image_id,
        "kind": kind,
        "height": int(height),
        "width": int(width),
        "inscribed": anno.inscribed.to_list(),
        "envelope": anno.envelope.to_list(),
    }


def annotation_from_json(doc):
    """Rebuilds a BoundedPolygonAnnotation by rasterizing stored polygons."""
    shape = (int(doc["height"]), int(doc["width"]))
    return BoundedPolygonAnnotation(
        Polygon(doc["inscribed"]), Polygon(doc["envelope"]), shape=shape
    )
