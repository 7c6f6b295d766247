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

from .const import LIB_NAME, BAND, INSIDE
from .config import Caps
from .exceptions import EmptyPoolsError, ShapeMismatchError

import logging
from collections import namedtuple

import numpy as np
import torch

__all__ = ["ConfidenceMaps", "ContrastiveSample", "entropy_map",
           "entropy_uncertainty", "class_uncertainty", "fuse_confidence",
           "pseudo_labels", "entropy_only_confidence", "compute_confidence",
           "confidence_fractions", "select_samples", "FRACTION_KEYS"]

logger = logging.getLogger(LIB_NAME)

FRACTION_KEYS = ("solid_uncertain", "background", "foreground")

ConfidenceMaps = namedtuple(
    "ConfidenceMaps",
    ("entropy", "u_entropy", "u_class", "fused", "pseudo_label")
)

ContrastiveSample = namedtuple(
    "ContrastiveSample",
    ("anchor_index", "anchor_label", "positives", "negatives", "skipped")
)
ContrastiveSample.__doc__ = """Contrastive selection of one image.

anchor_index / anchor_label are flat pixel indices and their 0/1 labels,
positives / negatives map a class to flat indices of certain pixels with that
class / the other class, skipped counts anchors dropped for lack of a pool.
"""


def entropy_map(p, eps=1e-6):
    """Binary predictive entropy -Σ_k P_k·log(P_k + eps) of each pixel."""
    q = 1.0 - p
    return -(p * torch.log(p + eps) + q * torch.log(q + eps))


def entropy_uncertainty(entropy, mu):
    """-1 where the entropy reaches mu, 0 elsewhere."""
    return -(entropy >= mu).long()


def class_uncertainty(cls_prob, band_mask):
    """Band confidence from the 3-class head.

    A band pixel predicted BAND becomes -1, otherwise it is 1 when INSIDE is
    more likely than OUTSIDE and 0 if not. Pixels off the band are 0.

    Args:
        cls_prob:
            (B, 3, H, W) or (3, H, W) class probabilities.
        band_mask:
            M_u, (B, H, W) or (H, W).
    """
    if cls_prob.shape[-3] != 3 or \
            tuple(cls_prob.shape[:-3]) + tuple(cls_prob.shape[-2:]) != \
            tuple(band_mask.shape):
        raise ShapeMismatchError(
            f"cls_prob {tuple(cls_prob.shape)} does not match band mask "
            f"{tuple(band_mask.shape)}", "confidence.class_uncertainty"
        )
    predicted = cls_prob.argmax(dim=-3)
    inside = (cls_prob.select(-3, 2) > cls_prob.select(-3, 0)).long()
    u_class = torch.where(predicted == BAND, torch.full_like(inside, -1),
                          inside)
    return u_class * band_mask.long()


def fuse_confidence(u_class, u_entropy, band_mask):
    """max(U^c + 2·U^e, -1) on the band, 0 elsewhere.

    A pixel flagged by either map ends up -1, the others keep U^c.
    """
    fused = torch.clamp(u_class.long() + 2 * u_entropy.long(), min=-1)
    return fused * band_mask.long()


def pseudo_labels(y_certain, fused, band_mask):
    """ŷ = y·(1 - M_u) + U, values in {-1, 0, 1}."""
    band = band_mask.long()
    return y_certain.long() * (1 - band) + fused.long()


def entropy_only_confidence(u_entropy, band_mask):
    """Band confidence without the classification head, U = U^e·M_u.

    Band pixels flagged by the entropy map are -1, the other band pixels 0.
    """
    return u_entropy.long() * band_mask.long()


def compute_confidence(outputs, region, mu, eps=1e-6,
                       use_class_confidence=True):
    """All confidence maps of a batch from the current model outputs.

    Args:
        outputs:
            ModelOutputs, gradients are not tracked through the maps.
        region:
            (B, H, W) region labels of the bounded annotations.
        mu:
            entropy threshold.
        eps:
            log guard of the entropy.
        use_class_confidence:
            False drops the classification head, the band confidence is
            then U^e alone.

    Returns:
        ConfidenceMaps of (B, H, W) tensors.
    """
    with torch.no_grad():
        p = outputs.seg_prob.detach()
        band = (region == BAND).long()
        y_certain = (region == INSIDE).long()

        entropy = entropy_map(p, eps)
        u_entropy = entropy_uncertainty(entropy, mu)
        if use_class_confidence:
            u_class = class_uncertainty(outputs.cls_prob.detach(), band)
            fused = fuse_confidence(u_class, u_entropy, band)
        else:
            u_class = torch.zeros_like(band)
            fused = entropy_only_confidence(u_entropy, band)

        pseudo = pseudo_labels(y_certain, fused, band)
    return ConfidenceMaps(entropy, u_entropy, u_class, fused, pseudo)


def confidence_fractions(fused, band_mask):
    """Fractions of band pixels assigned -1, 0 and 1.

    Returns:
        dict keyed by FRACTION_KEYS plus "band_pixels". All fractions are 0
        when the band is empty.
    """
    band = band_mask.bool()
    n_band = int(band.sum())
    values = fused[band]
    result = {"band_pixels": n_band}
    for key, value in zip(FRACTION_KEYS, (-1, 0, 1)):
        result[key] = float((values == value).sum()) / n_band \
            if n_band else 0.0
    return result


def _certain_pool(certain_label, certain, label):
    pool = np.flatnonzero(certain & (certain_label == label))
    if pool.size == 0:
        raise EmptyPoolsError(f"no certain pixel of class {label}",
                              "confidence.select_samples", label)
    return pool


def _subsample(rng, indices, cap):
    if indices.size <= cap:
        return indices
    return np.sort(rng.choice(indices, size=cap, replace=False))


def _as_numpy(value):
    if isinstance(value, torch.Tensor):
        return value.detach().cpu().numpy()
    return np.asarray(value)


def select_samples(seg_prob, region, pseudo, caps=None, seed=0,
                   threshold=0.5):
    """Picks contrastive anchors and certain-region pools of one image.

    Anchors are the band pixels with ŷ in {0, 1} plus the certain pixels
    whose thresholded prediction disagrees with their label, subsampled to
    caps.anchors. Pools only hold certain pixels: positives of class c are
    certain pixels labeled c (capped to caps.positives), negatives the
    certain pixels of the other class (capped to caps.negatives). When a
    class has no certain pixel, every anchor is skipped.

    Args:
        seg_prob:
            (H, W) foreground probability, a ModelOutputs is not accepted
            here since selection is per image.
        region:
            (H, W) region labels.
        pseudo:
            (H, W) pseudo labels ŷ.
        caps:
            Caps or dict.
        seed:
            seed of the subsampling.

    Returns:
        ContrastiveSample with torch.int64 index tensors.
    """
    if not isinstance(caps, Caps):
        caps = Caps(caps)

    p = _as_numpy(seg_prob).ravel()
    region = _as_numpy(region).ravel()
    pseudo = _as_numpy(pseudo).ravel()
    if not p.shape == region.shape == pseudo.shape:
        raise ShapeMismatchError("seg_prob, region and pseudo labels differ "
                                 "in size", "confidence.select_samples")

    rng = np.random.default_rng(seed)
    certain = region != BAND
    certain_label = (region == INSIDE).astype(np.int64)
    predicted = (p >= threshold).astype(np.int64)

    band_anchor = (region == BAND) & (pseudo >= 0)
    hard_anchor = certain & (predicted != certain_label)
    anchor_label_map = np.where(certain, certain_label, pseudo)

    anchors = _subsample(rng, np.flatnonzero(band_anchor | hard_anchor),
                         caps.anchors)
    labels = anchor_label_map[anchors].astype(np.int64)

    empty = np.zeros(0, dtype=np.int64)
    try:
        pools = {label: _certain_pool(certain_label, certain, label)
                 for label in (0, 1)}
    except EmptyPoolsError as e:
        if anchors.size:
            logger.debug(f"Skipping {anchors.size} anchors: {e}")
        return ContrastiveSample(
            torch.from_numpy(empty), torch.from_numpy(empty),
            {0: torch.from_numpy(empty), 1: torch.from_numpy(empty)},
            {0: torch.from_numpy(empty), 1: torch.from_numpy(empty)},
            int(anchors.size)
        )

    positives = {}
    negatives = {}
    for label in (0, 1):
        positives[label] = torch.from_numpy(
            _subsample(rng, pools[label], caps.positives).astype(np.int64))
        negatives[label] = torch.from_numpy(
            _subsample(rng, pools[1 - label], caps.negatives)
            .astype(np.int64))

    return ContrastiveSample(torch.from_numpy(anchors.astype(np.int64)),
                             torch.from_numpy(labels), positives, negatives,
                             0)
