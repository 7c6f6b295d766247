import pytest
from .conftest import disk_mask

import os
import sys

projpath = os.path.normpath(os.path.join(os.path.abspath(__file__), "../.."))
sys.path.insert(0, projpath)

from bpseg import (emit_report, plot_loss_curves, trimap_analysis, read_csv,
                   MetricsReport, ReportIOError, METRIC_KEYS, TRIMAP_KEYS)

import numpy as np


def metrics_report():
    rows = [
        {"image_id": "test_0000", "dice": 0.5, "jaccard": 1 / 3,
         "accuracy": 0.9, "sensitivity": None},
        {"image_id": "test_0001", "dice": 0.75, "jaccard": 0.6,
         "accuracy": 0.95, "sensitivity": 0.8},
    ]
    return MetricsReport(rows, {"split": "test"})


def trimap_report():
    gt = np.stack([disk_mask(32, 8), disk_mask(32, 6)])
    pred_a = np.stack([disk_mask(32, 8.5), disk_mask(32, 6)])
    pred_b = np.stack([disk_mask(32, 10), disk_mask(32, 4)])
    return trimap_analysis(pred_a, pred_b, gt, (1, 2, 3),
                           {"a": "run_a/checkpoint_best.pt",
                            "b": "run_b/checkpoint_best.pt"})


class TestEmit:
    def test_metrics_csv(self, tmp_path):
        report = metrics_report()
        written = emit_report({"metrics": report}, str(tmp_path))
        assert written == [str(tmp_path / "metrics.csv")]

        rows = read_csv(written[0])
        assert list(rows[0]) == ["image_id"] + list(METRIC_KEYS)
        assert [row["image_id"] for row in rows] == \
            ["test_0000", "test_0001", "mean"]
        assert rows[0]["jaccard"] == 1 / 3
        assert rows[0]["sensitivity"] is None
        assert rows[2]["dice"] == 0.625
        assert rows[2]["sensitivity"] == 0.8

    def test_trimap_plot(self, tmp_path):
        pytest.importorskip("matplotlib")
        written = emit_report({"trimap": trimap_report()}, str(tmp_path))
        assert str(tmp_path / "trimap.png") in written
        assert os.path.getsize(tmp_path / "trimap.png") > 0

        rows = read_csv(str(tmp_path / "trimap.csv"))
        assert list(rows[0]) == list(TRIMAP_KEYS)
        assert [row["width"] for row in rows] == [1, 2, 3]

    def test_plots_unavailable(self, tmp_path, monkeypatch):
        monkeypatch.setattr("bpseg.report._pyplot", lambda: None)
        written = emit_report({"trimap": trimap_report()}, str(tmp_path))
        assert written == [str(tmp_path / "trimap.csv")]

    def test_plots_disabled(self, tmp_path):
        written = emit_report({"trimap": trimap_report()}, str(tmp_path),
                              plots=False)
        assert not os.path.exists(tmp_path / "trimap.png")
        assert len(written) == 1

    def test_rows(self, tmp_path):
        rows = [{"kind": "box", "images": 8, "ratio": 0.02},
                {"kind": "bpanno", "images": 8, "ratio": None}]
        emit_report({"cost": rows}, str(tmp_path))
        assert read_csv(str(tmp_path / "cost.csv")) == rows

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(ReportIOError):
            emit_report({"metrics": metrics_report()}, str(blocker))


class TestLossCurves:
    def test_from_csv(self, tmp_path):
        pytest.importorskip("matplotlib")
        path = tmp_path / "loss_log.csv"
        path.write_text("step,epoch,l_c,l_pcl,l_ce,total\n"
                        "0,0,1.5,0.0,0.0,1.5\n"
                        "1,1,1.2,0.4,1.0,1.82\n")
        out = plot_loss_curves(str(path), str(tmp_path / "loss.png"))
        assert out == str(tmp_path / "loss.png")
        assert os.path.getsize(out) > 0

    def test_unavailable(self, tmp_path, monkeypatch):
        monkeypatch.setattr("bpseg.report._pyplot", lambda: None)
        assert plot_loss_curves([], str(tmp_path / "loss.png")) is None
