import pytest
from .conftest import disk_mask

import os
import sys

projpath = os.path.normpath(os.path.join(os.path.abspath(__file__), "../.."))
sys.path.insert(0, projpath)

from bpseg import (binarize, metrics, mean_metrics, predict_split,
                   evaluate_model, boundary_pixels, trimap_masks,
                   region_metrics, trimap_analysis, annotation_cost_report,
                   summarize_seeds, build_model, MetricsReport, TrimapReport,
                   ShapeMismatchError, InvalidParamsError, METRIC_KEYS,
                   TRIMAP_KEYS, COST_KEYS)

import numpy as np


def band_oracle(gt, width):
    """Pixels within width of a 4-neighbour boundary pixel, brute force."""
    height, w = gt.shape
    edges = []
    for r in range(height):
        for c in range(w):
            if not gt[r, c]:
                continue
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < height and 0 <= cc < w) or not gt[rr, cc]:
                    edges.append((r, c))
                    break
    band = np.zeros(gt.shape, dtype=bool)
    for r in range(height):
        for c in range(w):
            band[r, c] = any((r - er) ** 2 + (c - ec) ** 2 <= width ** 2
                             for er, ec in edges)
    return band


class TestMetrics:
    def test_example(self):
        pred = np.zeros(4096, dtype=np.uint8)
        gt = np.zeros(4096, dtype=np.uint8)
        pred[:60] = 1
        gt[30:70] = 1
        scores = metrics(pred.reshape(64, 64), gt.reshape(64, 64))
        assert scores["dice"] == pytest.approx(0.6)
        assert scores["jaccard"] == pytest.approx(30 / 70)
        assert scores["sensitivity"] == pytest.approx(0.75)
        assert scores["accuracy"] == pytest.approx(4056 / 4096)

    def test_jaccard_from_dice(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pred = rng.uniform(size=(16, 16)) > 0.5
            gt = rng.uniform(size=(16, 16)) > 0.4
            scores = metrics(pred, gt)
            d = scores["dice"]
            assert scores["jaccard"] == pytest.approx(d / (2 - d))

    def test_empty(self):
        empty = np.zeros((8, 8), dtype=np.uint8)
        full = np.ones((8, 8), dtype=np.uint8)
        assert metrics(empty, empty) == {"dice": 1.0, "jaccard": 1.0,
                                         "accuracy": 1.0, "sensitivity": 1.0}
        scores = metrics(full, empty)
        assert scores["dice"] == 0.0
        assert scores["sensitivity"] is None
        assert metrics(empty, full)["sensitivity"] == 0.0

    def test_shape(self):
        with pytest.raises(ShapeMismatchError):
            metrics(np.zeros((8, 8)), np.zeros((8, 9)))

    def test_mean_skips_none(self):
        rows = [{"dice": 0.5, "jaccard": 0.2, "accuracy": 1.0,
                 "sensitivity": None},
                {"dice": 1.0, "jaccard": 0.4, "accuracy": 0.5,
                 "sensitivity": 0.6}]
        mean = mean_metrics(rows)
        assert mean["dice"] == 0.75
        assert mean["sensitivity"] == 0.6
        assert mean_metrics([])["dice"] is None

    def test_binarize(self):
        assert binarize([0.49, 0.5, 0.9]).tolist() == [0, 1, 1]


class TestTrimap:
    def test_boundary_pixels(self):
        square = np.zeros((6, 6), dtype=np.uint8)
        square[1:5, 1:5] = 1
        edge = boundary_pixels(square)
        assert edge.sum() == 12
        assert not edge[2:4, 2:4].any()
        full = np.ones((3, 3), dtype=np.uint8)
        assert boundary_pixels(full).sum() == 8

    def test_band_oracle(self):
        gt = disk_mask(16, 5)
        for width in (1, 2, 3):
            boundary, interior = trimap_masks(gt, width)
            assert np.array_equal(boundary, band_oracle(gt, width))
            assert np.array_equal(interior, ~boundary)

    def test_empty_gt(self):
        boundary, interior = trimap_masks(np.zeros((8, 8)), 3)
        assert not boundary.any()
        assert interior.all()

    def test_region_metrics(self):
        gt = disk_mask(16, 5)
        assert region_metrics(gt, gt, np.zeros((16, 16))) == \
            {"dice": None, "jaccard": None}
        assert region_metrics(gt, gt, np.ones((16, 16))) == \
            {"dice": 1.0, "jaccard": 1.0}

    def test_identical(self):
        gt = np.stack([disk_mask(16, 5), disk_mask(16, 4)])
        pred = np.stack([disk_mask(16, 6), disk_mask(16, 3)])
        report = trimap_analysis(pred, pred, gt, (1, 3, 5))
        assert isinstance(report, TrimapReport)
        assert report.widths == [1, 3, 5]
        for row in report.rows:
            assert set(row) == set(TRIMAP_KEYS)
            assert row["delta_boundary_dice"] == 0
            assert row["delta_interior_jaccard"] == 0

    def test_boundary_difference(self):
        gt = disk_mask(32, 8)
        good = disk_mask(32, 8.5)
        bad = disk_mask(32, 10)
        report = trimap_analysis(good, bad, gt, (1, 2))
        for row in report.rows:
            assert row["delta_boundary_dice"] > 0

    def test_huge_width(self):
        gt = disk_mask(16, 5)
        report = trimap_analysis(gt, gt, gt, (100,))
        row = report.rows[0]
        assert row["interior_dice_a"] is None
        assert row["delta_interior_dice"] is None
        assert row["boundary_dice_a"] == 1.0

    @pytest.mark.parametrize("widths", [(), (0, 1), (3, 2), (1, 1)])
    def test_bad_widths(self, widths):
        gt = disk_mask(16, 5)
        with pytest.raises(InvalidParamsError):
            trimap_analysis(gt, gt, gt, widths)

    def test_shape(self):
        with pytest.raises(ShapeMismatchError):
            trimap_analysis(np.zeros((8, 8)), np.zeros((8, 8)),
                            np.zeros((8, 9)), (1,))


class TestModelEvaluation:
    def test_predict_split(self, dataset):
        model = build_model({"base_channels": 4, "depth": 2})
        image_ids, preds, gts = predict_split(model, dataset, "test", 1)
        assert len(image_ids) == 2
        assert preds.shape == gts.shape == (2, 32, 32)
        assert set(np.unique(preds)) <= {0, 1}

    def test_evaluate_model(self, dataset):
        model = build_model({"base_channels": 4, "depth": 2})
        report = evaluate_model(model, dataset, "val")
        assert isinstance(report, MetricsReport)
        assert report.n_images == 2
        assert report.provenance["split"] == "val"
        assert set(METRIC_KEYS) <= set(report.rows[0])
        assert 0 <= report.mean["dice"] <= 1


class TestCost:
    def test_report(self, dataset):
        rows = {row["kind"]: row for row in annotation_cost_report(dataset)}
        assert set(rows) == {"bpanno", "scribble", "box", "rectangle",
                             "mask", "bprect", "bpellipse"}
        for row in rows.values():
            assert list(row) == list(COST_KEYS)
            assert row["images"] == 8
        assert rows["box"]["mean_clicks"] == 2
        assert rows["rectangle"]["mean_clicks"] == 2
        assert rows["bprect"]["mean_clicks"] == 4
        assert rows["bpellipse"]["mean_clicks"] == 6
        assert rows["scribble"]["mean_clicks"] == 4
        assert rows["mask"]["ratio"] == 1.0
        assert 6 <= rows["bpanno"]["mean_clicks"] <= 64
        assert rows["bpanno"]["ratio"] < 1

    def test_no_annotation(self, tmp_path):
        from bpseg import generate_synthetic
        manifest = generate_synthetic(str(tmp_path), 6, size=32, seed=0)
        assert annotation_cost_report(manifest) == []


class TestSummarize:
    def test_groups(self):
        rows = [
            {"variant": "a", "dice": 0.5, "jaccard": 0.3, "accuracy": 0.9,
             "sensitivity": None},
            {"variant": "a", "dice": 0.7, "jaccard": 0.5, "accuracy": 0.9,
             "sensitivity": 0.8},
            {"variant": "b", "dice": 0.9, "jaccard": 0.8, "accuracy": 1.0,
             "sensitivity": 1.0},
        ]
        summary = summarize_seeds(rows)
        assert [entry["variant"] for entry in summary] == ["a", "b"]
        assert summary[0]["n_seeds"] == 2
        assert summary[0]["dice_mean"] == pytest.approx(0.6)
        assert summary[0]["dice_std"] == pytest.approx(0.1)
        assert summary[0]["sensitivity_mean"] == 0.8
        assert summary[1]["dice_std"] == 0.0
