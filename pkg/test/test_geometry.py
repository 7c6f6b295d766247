import pytest
from .conftest import disk_mask, random_blob

import os
import sys
import logging

projpath = os.path.normpath(os.path.join(os.path.abspath(__file__), "../.."))
sys.path.insert(0, projpath)

from bpseg import (Polygon, BoundedPolygonAnnotation, RegionPartition,
                   dilate_erode, trace_contour, douglas_peucker, make_bpanno,
                   make_bounded_shape, make_partition, make_scribble,
                   make_box, make_rectangle_mask, box_to_mask, jitter_box,
                   largest_component, rasterize_polygon,
                   point_segment_distance, polygon_is_simple,
                   annotation_to_json, annotation_from_json,
                   partition_from_masks, ErosionEmptyError,
                   MultiComponentError, DegenerateError, NoForegroundError,
                   ShapeMismatchError, OUTSIDE, BAND, INSIDE)

import bpseg.geometry as geometry

import numpy as np
from skimage.morphology import disk


def brute_morphology(mask, radius):
    offsets = np.argwhere(disk(radius)) - radius
    height, width = mask.shape
    dilated = np.zeros_like(mask)
    eroded = np.zeros_like(mask)
    for r in range(height):
        for c in range(width):
            values = []
            for dr, dc in offsets:
                rr, cc = r + dr, c + dc
                if 0 <= rr < height and 0 <= cc < width:
                    values.append(mask[rr, cc])
                else:
                    values.append(0)
            dilated[r, c] = max(values)
            eroded[r, c] = min(values)
    return dilated, eroded


def dropped_deviation(original, simplified):
    """Largest distance of a dropped vertex to the edge replacing it."""
    points = [tuple(p) for p in original.vertices]
    kept = [points.index(tuple(p)) for p in simplified.vertices]
    assert kept == sorted(kept)
    n = len(points)
    worst = 0.0
    for a, b in zip(kept, kept[1:] + [kept[0] + n]):
        for i in range(a + 1, b):
            d = point_segment_distance(
                [points[i % n]], points[a % n], points[b % n])[0]
            worst = max(worst, d)
    return worst


class TestPolygon:
    def test_too_few_vertices(self):
        with pytest.raises(DegenerateError):
            Polygon([(0, 0), (1, 1)])

    def test_repeated_vertex(self):
        with pytest.raises(DegenerateError):
            Polygon([(0, 0), (0, 0), (1, 1), (0, 1)])

    def test_rasterize_edge_inclusive(self):
        poly = Polygon([(0.5, 0.5), (2.5, 0.5), (2.5, 2.5), (0.5, 2.5)])
        mask = poly.rasterize(8, 8)
        expected = np.zeros((8, 8), np.uint8)
        expected[0:3, 0:3] = 1
        assert np.array_equal(mask, expected)

    def test_rasterize_even_odd(self):
        # square with a square hole, traversed as one ring
        ring = [(0, 0), (6, 0), (6, 6), (0, 6), (0, 0.2),
                (2, 0.2), (2, 4), (4, 4), (4, 2), (2, 2), (2, 0.2), (0, 0.2)]
        mask = rasterize_polygon(ring[:-1], 8, 8)
        assert mask[3, 3] == 0
        assert mask[5, 5] == 1
        assert mask[7, 7] == 0

    def test_is_simple(self):
        assert polygon_is_simple([(0, 0), (4, 0), (4, 4), (0, 4)])
        assert not polygon_is_simple([(0, 0), (4, 4), (4, 0), (0, 4)])

    def test_to_list(self):
        poly = Polygon([(0, 0), (3, 0), (0, 3)])
        assert poly.to_list() == [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]]
        assert len(poly) == 3


class TestDilateErode:
    def test_full_image(self):
        mask = np.ones((10, 10), np.uint8)
        dilated, eroded = dilate_erode(mask, 1)
        assert dilated.all()
        assert eroded.sum() < mask.sum()
        assert np.all(eroded <= mask)

    def test_single_pixel(self):
        mask = np.zeros((10, 10), np.uint8)
        mask[5, 5] = 1
        with pytest.raises(ErosionEmptyError):
            dilate_erode(mask, 1)

    def test_empty(self):
        with pytest.raises(NoForegroundError):
            dilate_erode(np.zeros((10, 10), np.uint8), 1)

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            dilate_erode(disk_mask(16, 4), 0)

    def test_small_mask(self):
        with pytest.raises(ShapeMismatchError):
            dilate_erode(np.ones((4, 4), np.uint8), 1)

    def test_disk_against_brute_force(self):
        mask = disk_mask(64, 6)
        dilated, eroded = dilate_erode(mask, 2)
        oracle_dilated, oracle_eroded = brute_morphology(mask, 2)
        assert np.array_equal(dilated, oracle_dilated)
        assert np.array_equal(eroded, oracle_eroded)
        assert np.all(eroded <= mask) and np.all(mask <= dilated)

    def test_opening_closing(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            mask = random_blob(rng)
            dilated, eroded = dilate_erode(mask, 3)
            _, closed = dilate_erode(dilated, 3)
            opened, _ = dilate_erode(eroded, 3)
            assert np.all(closed >= mask)
            assert np.all(opened <= mask)


class TestTraceContour:
    def test_square(self):
        mask = np.zeros((10, 10), np.uint8)
        mask[2:5, 3:6] = 1
        poly = trace_contour(mask)
        assert poly.to_list() == [[3, 2], [6, 2], [6, 5], [3, 5]]
        assert np.array_equal(poly.rasterize(10, 10), mask)

    def test_l_shape(self):
        mask = np.zeros((10, 10), np.uint8)
        mask[2:8, 2:4] = 1
        mask[6:8, 4:8] = 1
        poly = trace_contour(mask)
        assert len(poly) == 6
        assert sorted(map(tuple, poly.to_list())) == sorted(
            [(2, 2), (4, 2), (4, 6), (8, 6), (8, 8), (2, 8)])
        assert np.array_equal(poly.rasterize(10, 10), mask)

    def test_empty(self):
        with pytest.raises(MultiComponentError) as e:
            trace_contour(np.zeros((10, 10), np.uint8))
        assert e.value.n_components == 0

    def test_two_components(self):
        mask = np.zeros((10, 10), np.uint8)
        mask[1:3, 1:3] = 1
        mask[6:8, 6:8] = 1
        with pytest.raises(MultiComponentError) as e:
            trace_contour(mask)
        assert e.value.n_components == 2

    def test_hole_filled(self):
        mask = np.zeros((10, 10), np.uint8)
        mask[2:8, 2:8] = 1
        mask[4:6, 4:6] = 0
        poly = trace_contour(mask)
        filled = mask.copy()
        filled[4:6, 4:6] = 1
        assert len(poly) == 4
        assert np.array_equal(poly.rasterize(10, 10), filled)

    def test_exact_on_blobs(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            mask = random_blob(rng)
            poly = trace_contour(mask)
            assert np.array_equal(poly.rasterize(*mask.shape), mask)
            assert poly.is_simple()


class TestDouglasPeucker:
    def test_collinear_midpoints(self):
        poly = Polygon([(0, 0), (5, 0), (10, 0), (10, 5), (10, 10),
                        (5, 10), (0, 10), (0, 5)])
        out = douglas_peucker(poly, 0.5)
        assert len(out) == 4
        assert sorted(map(tuple, out.to_list())) == sorted(
            [(0, 0), (10, 0), (10, 10), (0, 10)])

    def test_zero_epsilon(self):
        poly = trace_contour(disk_mask(32, 8))
        assert douglas_peucker(poly, 0) == poly

    def test_collapse(self):
        poly = Polygon([(0, 0), (5, 0.1), (10, 0), (5, -0.1)])
        with pytest.raises(DegenerateError):
            douglas_peucker(poly, 1.0)

    def test_negative_epsilon(self):
        with pytest.raises(ValueError):
            douglas_peucker(Polygon([(0, 0), (3, 0), (0, 3)]), -1)

    def test_circle_bound(self):
        contour = trace_contour(disk_mask(64, 20))
        out = douglas_peucker(contour, 2.0)
        assert 3 <= len(out) < len(contour)
        assert dropped_deviation(contour, out) <= 2.0 + 1e-9

    def test_bound_on_blobs(self):
        rng = np.random.default_rng(1)
        for epsilon in (0.5, 1.0, 2.0, 3.0):
            contour = trace_contour(random_blob(rng))
            out = douglas_peucker(contour, epsilon)
            assert dropped_deviation(contour, out) <= epsilon + 1e-9


class TestMakeBpanno:
    def test_disk(self):
        gt = disk_mask(64, 10)
        anno = make_bpanno(gt, radius=2, epsilon=1.5)
        assert isinstance(anno, BoundedPolygonAnnotation)
        assert np.all(anno.inscribed_mask <= gt)
        assert np.all(gt <= anno.envelope_mask)
        assert np.any(anno.envelope_mask > anno.inscribed_mask)

    def test_single_pixel(self):
        gt = np.zeros((16, 16), np.uint8)
        gt[8, 8] = 1
        with pytest.raises(ErosionEmptyError):
            make_bpanno(gt)

    def test_random_blobs(self):
        rng = np.random.default_rng(2024)
        fractions = []
        for _ in range(100):
            gt = random_blob(rng)
            anno = make_bpanno(gt)
            assert np.all(anno.inscribed_mask <= gt)
            assert np.all(gt <= anno.envelope_mask)
            assert len(anno.inscribed) <= 32
            assert len(anno.envelope) <= 32
            band = int(np.sum(anno.envelope_mask > anno.inscribed_mask))
            fractions.append(band / anno.envelope_mask.sum())
        assert 0.05 <= min(fractions)
        assert max(fractions) <= 0.60

    def test_vertex_cap(self):
        anno = make_bpanno(disk_mask(64, 24), epsilon=0.5, vertex_cap=12)
        assert len(anno.inscribed) <= 12
        assert len(anno.envelope) <= 12

    def test_unreachable_cap_raises(self):
        square = Polygon([(0, 0), (4, 0), (4, 4), (0, 4)])
        with pytest.raises(DegenerateError):
            geometry._simplify_capped(square, 2.0, 3)
        gt = np.zeros((40, 40), np.uint8)
        gt[10:30, 10:30] = 1
        with pytest.raises(DegenerateError):
            make_bpanno(gt, vertex_cap=3)

    @pytest.mark.parametrize("cap", [3, 4, 5])
    def test_small_cap_bounded(self, cap, monkeypatch):
        calls = []
        simplify = geometry.douglas_peucker

        def counted(poly, epsilon):
            calls.append(epsilon)
            return simplify(poly, epsilon)

        monkeypatch.setattr(geometry, "douglas_peucker", counted)
        rounds = 4
        per_fit = 2 * geometry.SIMPLIFY_STEPS + 1
        rng = np.random.default_rng(7)
        for _ in range(10):
            gt = random_blob(rng)
            calls.clear()
            try:
                anno = make_bpanno(gt, vertex_cap=cap, repair_rounds=rounds)
            except (DegenerateError, ErosionEmptyError):
                pass
            else:
                assert len(anno.inscribed) <= cap
                assert len(anno.envelope) <= cap
                assert np.all(anno.inscribed_mask <= gt)
                assert np.all(gt <= anno.envelope_mask)
            assert len(calls) <= 2 * rounds * per_fit

    def test_multi_component_warns(self, caplog):
        gt = disk_mask(64, 12, (20, 20))
        gt[55:58, 55:58] = 1
        with caplog.at_level(logging.WARNING, "bpseg"):
            anno = make_bpanno(gt)
        assert "components" in caplog.text
        assert anno.envelope_mask[56, 56] == 0

    def test_json_roundtrip(self):
        anno = make_bpanno(disk_mask(48, 14))
        doc = annotation_to_json(anno, "train_00000")
        assert doc["height"] == 48 and doc["width"] == 48
        again = annotation_from_json(doc)
        assert again.inscribed == anno.inscribed
        assert np.array_equal(again.inscribed_mask, anno.inscribed_mask)
        assert np.array_equal(again.envelope_mask, anno.envelope_mask)


class TestBoundedShape:
    @pytest.mark.parametrize("shape", ["rectangle", "ellipse"])
    def test_containment(self, shape):
        rng = np.random.default_rng(7)
        for _ in range(10):
            gt = random_blob(rng)
            anno = make_bounded_shape(gt, 3, shape)
            assert np.all(anno.inscribed_mask <= gt)
            assert np.all(gt <= anno.envelope_mask)
            assert np.any(anno.envelope_mask > anno.inscribed_mask)

    def test_rectangle_vertices(self):
        anno = make_bounded_shape(disk_mask(64, 15), 3, "rectangle")
        assert len(anno.inscribed) == 4
        assert len(anno.envelope) == 4

    def test_unknown_shape(self):
        with pytest.raises(ValueError):
            make_bounded_shape(disk_mask(64, 15), 3, "hexagon")


class TestPartition:
    def test_single_band_pixel(self):
        inscribed = np.zeros((10, 10), np.uint8)
        inscribed[3:6, 3:6] = 1
        envelope = inscribed.copy()
        envelope[2, 4] = 1
        part = partition_from_masks(inscribed, envelope)
        assert part.counts() == {"inside": 9, "band": 1, "outside": 90}

    def test_random_annotation(self):
        anno = make_bpanno(random_blob(np.random.default_rng(9)))
        part = make_partition(anno)
        assert isinstance(part, RegionPartition)
        assert sum(part.counts().values()) == 64 * 64
        assert np.array_equal(part.uncertain_mask,
                              anno.envelope_mask - anno.inscribed_mask)
        assert np.array_equal(part.class_label == 2,
                              anno.inscribed_mask == 1)
        assert np.array_equal(part.class_label == 0,
                              anno.envelope_mask == 0)
        assert set(np.unique(part.region_label)) <= {OUTSIDE, BAND, INSIDE}
        assert np.array_equal(part.certain_label(), anno.inscribed_mask)

    def test_invalid_masks(self):
        inscribed = np.zeros((10, 10), np.uint8)
        inscribed[3:6, 3:6] = 1
        with pytest.raises(DegenerateError):
            BoundedPolygonAnnotation(None, None, inscribed, inscribed)


class TestLargestComponent:
    def test_keeps_largest(self):
        mask = np.zeros((12, 12), np.uint8)
        mask[1:3, 1:3] = 1
        mask[5:10, 5:10] = 1
        out = largest_component(mask)
        assert out.sum() == 25
        assert out[1, 1] == 0

    def test_empty(self):
        with pytest.raises(NoForegroundError):
            largest_component(np.zeros((10, 10), np.uint8))


class TestScribble:
    def test_deterministic(self):
        gt = disk_mask(64, 15)
        a = make_scribble(gt, 1, 2, 5)
        b = make_scribble(gt, 1, 2, 5)
        assert np.array_equal(a.foreground, b.foreground)
        assert np.array_equal(a.background, b.background)
        assert a.lines == b.lines

    def test_single_pixel(self):
        gt = np.zeros((10, 10), np.uint8)
        gt[4, 6] = 1
        scribble = make_scribble(gt, 1, 1, 0)
        assert scribble.foreground.sum() == 1
        assert scribble.foreground[4, 6] == 1

    def test_membership(self):
        rng = np.random.default_rng(11)
        for seed in range(100):
            gt = random_blob(rng, 32)
            scribble = make_scribble(gt, 1, 2, seed)
            assert not np.any(scribble.foreground & (gt == 0))
            assert not np.any(scribble.background & (gt == 1))
            assert scribble.foreground.any()

    def test_no_foreground(self):
        with pytest.raises(NoForegroundError):
            make_scribble(np.zeros((10, 10), np.uint8))


class TestBox:
    def test_single_pixel(self):
        gt = np.zeros((10, 10), np.uint8)
        gt[7, 5] = 1
        assert make_box(gt) == ((5, 7), (5, 7))

    def test_idempotent(self):
        rect = make_rectangle_mask(disk_mask(32, 9))
        assert np.array_equal(make_rectangle_mask(rect), rect)

    def test_tight(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            gt = random_blob(rng)
            (x0, y0), (x1, y1) = make_box(gt)
            box = box_to_mask(((x0, y0), (x1, y1)), *gt.shape)
            assert np.all(gt <= box)
            assert gt[y0, :].any() and gt[y1, :].any()
            assert gt[:, x0].any() and gt[:, x1].any()

    def test_jitter_stays_inside(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            (x0, y0), (x1, y1) = jitter_box(((2, 3), (20, 25)), 4, rng,
                                            30, 24)
            assert 0 <= x0 <= x1 < 24
            assert 0 <= y0 <= y1 < 30

    def test_no_jitter(self):
        box = ((2, 3), (20, 25))
        assert jitter_box(box, 0, np.random.default_rng(0), 30, 30) == box

    def test_empty(self):
        with pytest.raises(NoForegroundError):
            make_box(np.zeros((10, 10), np.uint8))
