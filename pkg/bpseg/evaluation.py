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

from .const import LIB_NAME, DEFAULT_TRIMAP_WIDTHS
from .dataset import load_batch
from .exceptions import ShapeMismatchError, InvalidParamsError
from .model import load_checkpoint
from .util import load_mask

import json
import logging

import numpy as np
import torch
from scipy import ndimage

__all__ = ["MetricsReport", "TrimapReport", "METRIC_KEYS", "TRIMAP_KEYS",
           "metrics", "mean_metrics", "binarize", "predict_split",
           "evaluate_model", "evaluate_checkpoint", "boundary_pixels",
           "trimap_masks", "region_metrics", "trimap_analysis",
           "trimap_checkpoints", "annotation_cost_report", "COST_KEYS",
           "summarize_seeds"]

logger = logging.getLogger(LIB_NAME)

METRIC_KEYS = ("dice", "jaccard", "accuracy", "sensitivity")
TRIMAP_KEYS = ("width",
               "boundary_dice_a", "boundary_jaccard_a",
               "boundary_dice_b", "boundary_jaccard_b",
               "interior_dice_a", "interior_jaccard_a",
               "interior_dice_b", "interior_jaccard_b",
               "delta_boundary_dice", "delta_boundary_jaccard",
               "delta_interior_dice", "delta_interior_jaccard")
COST_KEYS = ("kind", "images", "mean_clicks", "mean_dense", "ratio")

FOUR = ndimage.generate_binary_structure(2, 1)
EIGHT = ndimage.generate_binary_structure(2, 2)

# Clicks needed for the shapes that have a fixed vertex count.
FIXED_CLICKS = {"box": 2, "rectangle": 2, "bprect": 4, "bpellipse": 6}


class MetricsReport:
    """Per image metrics of one prediction set.

    Attributes:
        rows:
            list of dicts with image_id and METRIC_KEYS. sensitivity is None
            when the ground truth is empty and the prediction is not.
        mean:
            dict of METRIC_KEYS averaged over the rows, None entries skipped.
        provenance:
            dict describing where the predictions came from (checkpoint,
            seed, supervision_mode, split).
    """
    def __init__(self, rows, provenance=None):
        self.rows = list(rows)
        self.mean = mean_metrics(self.rows)
        self.provenance = dict(provenance or {})

    @property
    def n_images(self):
        return len(self.rows)

    def __repr__(self):
        return (f"<MetricsReport {self.n_images} images, "
                f"dice={self.mean['dice']}>")


class TrimapReport:
    """Boundary / interior metrics of two prediction sets per band width.

    Attributes:
        rows:
            list of dicts keyed by TRIMAP_KEYS, None where a region is empty.
        provenance:
            dict with the names of the two prediction sets.
    """
    def __init__(self, rows, provenance=None):
        self.rows = list(rows)
        self.provenance = dict(provenance or {})

    @property
    def widths(self):
        return [row["width"] for row in self.rows]

    def __repr__(self):
        return f"<TrimapReport widths={self.widths}>"


def binarize(p, threshold=0.5):
    return (np.asarray(p) >= threshold).astype(np.uint8)


def _check_pair(pred, gt, operation):
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} and ground "
                                 f"truth {gt.shape} differ", operation)
    return pred, gt


def metrics(pred_mask, gt_mask):
    """Dice, Jaccard, Accuracy and Sensitivity of one binary prediction.

    Both masks empty gives Dice = Jaccard = Sensitivity = 1. An empty ground
    truth with a nonempty prediction has no defined sensitivity, it is
    reported as None.
    """
    pred, gt = _check_pair(pred_mask, gt_mask, "evaluation.metrics")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    n = pred.size
    tn = n - tp - fp - fn

    union = tp + fp + fn
    if union == 0:
        return {"dice": 1.0, "jaccard": 1.0, "accuracy": 1.0,
                "sensitivity": 1.0}
    return {
        "dice": 2.0 * tp / (2 * tp + fp + fn),
        "jaccard": tp / union,
        "accuracy": (tp + tn) / n,
        "sensitivity": tp / (tp + fn) if tp + fn else None,
    }


def mean_metrics(rows):
    mean = {}
    for key in METRIC_KEYS:
        values = [row[key] for row in rows if row.get(key) is not None]
        mean[key] = float(np.mean(values)) if values else None
    return mean


def predict_split(model, manifest, split, batch_size=16, threshold=0.5):
    """Runs the segmentation head over a whole split.

    Returns:
        A tuple of (image_ids, predictions, ground truths), the last two as
        (N, H, W) uint8 arrays.
    """
    records = manifest.records(split)
    image_ids = []
    preds = []
    gts = []

    model.eval()
    with torch.no_grad():
        for start in range(0, len(records), batch_size):
            indices = list(range(start, min(start + batch_size,
                                            len(records))))
            batch = load_batch(manifest, split, indices, "full_mask")
            p = model.predict(batch["images"]).numpy()
            image_ids.extend(batch["image_ids"])
            preds.append(binarize(p, threshold))
            gts.append(batch["masks"].numpy().astype(np.uint8))

    if not records:
        return image_ids, np.zeros((0, 0, 0), np.uint8), \
            np.zeros((0, 0, 0), np.uint8)
    return image_ids, np.concatenate(preds), np.concatenate(gts)


def evaluate_model(model, manifest, split="test", batch_size=16,
                   provenance=None):
    image_ids, preds, gts = predict_split(model, manifest, split, batch_size)
    rows = []
    for image_id, pred, gt in zip(image_ids, preds, gts):
        row = {"image_id": image_id}
        row.update(metrics(pred, gt))
        rows.append(row)

    provenance = dict(provenance or {})
    provenance.setdefault("split", split)
    return MetricsReport(rows, provenance)


def evaluate_checkpoint(checkpoint, manifest, split="test", batch_size=16):
    """Evaluates a saved checkpoint on a manifest split.

    Raises:
        MissingFileError, InvalidConfigError
    """
    model, payload = load_checkpoint(checkpoint)
    train_config = payload.get("train_config") or {}
    provenance = {
        "checkpoint": str(checkpoint),
        "split": split,
        "seed": train_config.get("seed"),
        "supervision_mode": train_config.get("supervision_mode"),
    }
    report = evaluate_model(model, manifest, split, batch_size, provenance)
    logger.info(f"Evaluated {checkpoint} on {report.n_images} {split} "
                f"images: dice {report.mean['dice']}")
    return report


def boundary_pixels(mask, connectivity=1):
    """Foreground pixels touching the background.

    connectivity 1 looks at the 4 direct neighbours, 2 also at the
    diagonals. Pixels outside the image count as background.
    """
    mask = np.asarray(mask).astype(bool)
    structure = FOUR if connectivity == 1 else EIGHT
    interior = ndimage.binary_erosion(mask, structure=structure,
                                      border_value=0)
    return mask & ~interior


def trimap_masks(gt, width):
    """Boundary band of the ground truth contour and its complement.

    The band holds the pixels within Euclidean distance `width` of a ground
    truth boundary pixel. An empty ground truth has no band.
    """
    edge = boundary_pixels(gt)
    if not edge.any():
        boundary = np.zeros(edge.shape, dtype=bool)
    else:
        boundary = ndimage.distance_transform_edt(~edge) <= width
    return boundary, ~boundary


def region_metrics(pred, gt, region):
    """Dice and Jaccard restricted to a region, None for an empty region."""
    region = np.asarray(region).astype(bool)
    if not region.any():
        return {"dice": None, "jaccard": None}
    pred = np.asarray(pred).astype(bool)[region]
    gt = np.asarray(gt).astype(bool)[region]
    tp = int(np.count_nonzero(pred & gt))
    union = int(np.count_nonzero(pred | gt))
    if union == 0:
        return {"dice": 1.0, "jaccard": 1.0}
    return {"dice": 2.0 * tp / (union + tp), "jaccard": tp / union}


def _stack(arr):
    arr = np.asarray(arr)
    return arr[None] if arr.ndim == 2 else arr


def _delta(a, b):
    if a is None or b is None:
        return None
    return a - b


def trimap_analysis(pred_a, pred_b, gt, widths=DEFAULT_TRIMAP_WIDTHS,
                    provenance=None):
    """Compares two prediction sets near and away from the ground truth
    contour.

    Pixels of all images are pooled per region before computing Dice and
    Jaccard.

    Args:
        pred_a, pred_b:
            (H, W) or (N, H, W) binary predictions.
        gt:
            ground truth with the same shape.
        widths:
            ascending positive band widths in pixels.

    Returns:
        TrimapReport, deltas are a - b.
    """
    operation = "evaluation.trimap_analysis"
    pred_a, pred_b, gt = _stack(pred_a), _stack(pred_b), _stack(gt)
    if not pred_a.shape == pred_b.shape == gt.shape:
        raise ShapeMismatchError(
            f"shapes {pred_a.shape}, {pred_b.shape} and {gt.shape} differ",
            operation
        )
    widths = list(widths)
    if not widths or any(w <= 0 for w in widths) or \
            widths != sorted(set(widths)):
        raise InvalidParamsError("widths must be positive and ascending",
                                 operation)

    rows = []
    for width in widths:
        bands = [trimap_masks(g, width) for g in gt]
        boundary = np.stack([band[0] for band in bands])
        interior = ~boundary

        row = {"width": width}
        for name, pred in (("a", pred_a), ("b", pred_b)):
            for region_name, region in (("boundary", boundary),
                                        ("interior", interior)):
                scores = region_metrics(pred, gt, region)
                row[f"{region_name}_dice_{name}"] = scores["dice"]
                row[f"{region_name}_jaccard_{name}"] = scores["jaccard"]
        for region_name in ("boundary", "interior"):
            for metric in ("dice", "jaccard"):
                row[f"delta_{region_name}_{metric}"] = _delta(
                    row[f"{region_name}_{metric}_a"],
                    row[f"{region_name}_{metric}_b"]
                )
        rows.append(row)
    return TrimapReport(rows, provenance)


def trimap_checkpoints(checkpoint_a, checkpoint_b, manifest, split="test",
                       widths=DEFAULT_TRIMAP_WIDTHS, batch_size=16):
    model_a, _ = load_checkpoint(checkpoint_a)
    model_b, _ = load_checkpoint(checkpoint_b)
    _, pred_a, gt = predict_split(model_a, manifest, split, batch_size)
    _, pred_b, _ = predict_split(model_b, manifest, split, batch_size)
    return trimap_analysis(pred_a, pred_b, gt, widths, {
        "a": str(checkpoint_a), "b": str(checkpoint_b), "split": split
    })


def _read_json(path):
    with open(path) as f:
        return json.load(f)


def _clicks(manifest, kind, files, dense):
    if kind in FIXED_CLICKS:
        return FIXED_CLICKS[kind]
    if kind == "mask":
        return dense
    doc = _read_json(manifest.path(files["json"]))
    if kind == "bpanno":
        return len(doc["inscribed"]) + len(doc["envelope"])
    if kind == "scribble":
        return 2 * len(doc["lines"])
    raise InvalidParamsError(f"unknown annotation kind '{kind}'",
                             "evaluation.annotation_cost_report")


def annotation_cost_report(manifest, split="train"):
    """Click-count proxy of every attached annotation kind.

    The dense reference is the number of outline pixels of the ground truth
    mask, diagonal contacts included, which is what a pixel-exact outline
    costs.

    Returns:
        list of dicts keyed by COST_KEYS, sorted by kind.
    """
    clicks = {}
    dense = {}
    for rec in manifest.records(split):
        if not rec.annotations:
            continue
        gt = load_mask(manifest.path(rec.mask))
        n_dense = int(np.count_nonzero(boundary_pixels(gt, connectivity=2)))
        for kind, files in rec.annotations.items():
            clicks.setdefault(kind, []).append(
                _clicks(manifest, kind, files, n_dense))
            dense.setdefault(kind, []).append(n_dense)

    rows = []
    for kind in sorted(clicks):
        mean_clicks = float(np.mean(clicks[kind]))
        mean_dense = float(np.mean(dense[kind]))
        rows.append({
            "kind": kind,
            "images": len(clicks[kind]),
            "mean_clicks": mean_clicks,
            "mean_dense": mean_dense,
            "ratio": mean_clicks / mean_dense if mean_dense else None,
        })
    if not rows:
        logger.warning(f"No annotation attached to split '{split}'")
    return rows


def summarize_seeds(rows, group_key="variant", keys=METRIC_KEYS):
    """Mean and standard deviation over seeds of each group.

    Args:
        rows:
            list of dicts holding group_key and the metric keys.

    Returns:
        list of dicts with group_key, n_seeds and <key>_mean / <key>_std,
        in order of first appearance.
    """
    groups = {}
    for row in rows:
        groups.setdefault(row[group_key], []).append(row)

    summary = []
    for name, members in groups.items():
        entry = {group_key: name, "n_seeds": len(members)}
        for key in keys:
            values = [m[key] for m in members if m.get(key) is not None]
            entry[f"{key}_mean"] = float(np.mean(values)) if values else None
            entry[f"{key}_std"] = float(np.std(values)) if values else None
        summary.append(entry)
    return summary
