import pytest
import os
import sys

projpath = os.path.normpath(os.path.join(os.path.abspath(__file__), "../.."))
sys.path.insert(0, projpath)

from bpseg import (generate_synthetic, attach_annotations, synthesize_sample,
                   GeneratorParams, TrainConfig, DatasetManifest)

import numpy as np


def wanted_env(envname, reason=None):
    if reason is None:
        reason = f"Env {envname} is not present, skipping..."
    return pytest.mark.skipif(
        not bool(os.environ.get(envname)),
        reason=reason
    )


def unwanted_env(envname, reason=None):
    if reason is None:
        reason = f"Env {envname} is set, skipping..."
    return pytest.mark.skipif(
        bool(os.environ.get(envname)),
        reason=reason
    )


def disk_mask(size, radius, center=None):
    """Pixels whose center lies within radius of center."""
    if center is None:
        center = (size / 2.0, size / 2.0)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    return (np.hypot(xx - center[0], yy - center[1]) <= radius) \
        .astype(np.uint8)


def random_blob(rng, size=64):
    """Star-shaped random blob, a single 4-connected component."""
    _, mask, _ = synthesize_sample(rng, size, GeneratorParams())
    return mask


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    """12 samples of 32x32 (8 train, 2 val, 2 test) with every kind."""
    root = tmp_path_factory.mktemp("dataset")
    manifest = generate_synthetic(str(root), 12, size=32, seed=3)
    attach_annotations(manifest, ["bpanno", "scribble", "box", "rectangle",
                                  "mask", "bprect", "bpellipse"])
    return DatasetManifest.load(str(root))


@pytest.fixture
def micro_config():
    """Few seconds of training on the session dataset."""
    return TrainConfig({
        "epochs": 2,
        "warmup_epochs": 1,
        "batch_size": 4,
        "learning_rate": 1e-3,
        "model.base_channels": 4,
        "model.depth": 2,
        "model.embed_dim": 8,
        "caps.anchors": 32,
        "caps.positives": 32,
        "caps.negatives": 64,
    })
