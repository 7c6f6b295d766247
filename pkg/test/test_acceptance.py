import pytest
from .conftest import wanted_env

import os
import sys

projpath = os.path.normpath(os.path.join(os.path.abspath(__file__), "../.."))
sys.path.insert(0, projpath)

from bpseg import (generate_synthetic, attach_annotations,
                   annotation_cost_report, ablation_suite, train,
                   evaluate_checkpoint, trimap_checkpoints, TrainConfig)

import numpy as np

SEEDS = (0, 1, 2)


def bpanno_ratio(manifest):
    rows = {row["kind"]: row for row in annotation_cost_report(manifest)}
    return rows["bpanno"]["ratio"]


def test_cost_ratio_small(tmp_path):
    manifest = generate_synthetic(str(tmp_path), 30, size=64, seed=0)
    attach_annotations(manifest, ["bpanno"])
    assert bpanno_ratio(manifest) < 0.25


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    manifest = generate_synthetic(str(root / "data"), 300, size=64, seed=0)
    attach_annotations(manifest, ["bpanno"])
    return manifest, root


@pytest.fixture(scope="module")
def ablation(desk):
    manifest, root = desk
    rows, summary = ablation_suite(manifest, TrainConfig(),
                                   str(root / "ablation"), SEEDS, "test")
    return rows, {entry["variant"]: entry for entry in summary}


@wanted_env("BPSEG_SLOW")
class TestDeskScale:
    def test_cost_ratio(self, desk):
        manifest, _ = desk
        assert bpanno_ratio(manifest) < 0.2

    def test_ordering(self, ablation):
        _, summary = ablation
        baseline = summary["baseline"]["dice_mean"]
        ccl = summary["+CCL"]["dice_mean"]
        full = summary["+CCL+CCG"]["dice_mean"]
        assert baseline <= ccl <= full
        assert full - baseline >= 0.005

    def test_close_to_dense(self, desk, ablation):
        manifest, root = desk
        _, summary = ablation
        dense = []
        for seed in SEEDS:
            result = train(manifest, TrainConfig({
                "supervision_mode": "full_mask", "seed": seed
            }), str(root / f"full_mask_seed{seed}"))
            report = evaluate_checkpoint(result.checkpoint, manifest, "test")
            dense.append(report.mean["dice"])
        assert summary["+CCL+CCG"]["dice_mean"] >= np.mean(dense) - 0.03

    def test_boundary_gain(self, desk, ablation):
        manifest, _ = desk
        rows, _ = ablation
        checkpoints = {(row["variant"], row["seed"]): row["checkpoint"]
                       for row in rows}
        deltas = []
        for seed in SEEDS:
            report = trimap_checkpoints(
                checkpoints[("+CCL+CCG", seed)],
                checkpoints[("baseline", seed)],
                manifest, "test", (1, 2, 3, 5)
            )
            deltas.append([row["delta_boundary_jaccard"]
                           for row in report.rows])
        assert all(delta >= 0 for delta in np.mean(deltas, axis=0))

