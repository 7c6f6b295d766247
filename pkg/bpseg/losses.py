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

from .const import LIB_NAME, IGNORE
from .config import LossWeights
from .exceptions import ShapeMismatchError, NonFiniteLossError

import math
import logging
from collections import namedtuple

import torch
import torch.nn.functional as F

__all__ = ["LossBundle", "ContrastiveResult", "dice_loss", "certain_loss",
           "partial_ce", "classification_loss", "contrastive_anchor_losses",
           "pixel_contrastive_loss", "batch_contrastive_loss", "total_loss",
           "check_finite", "LOSS_TERMS"]

logger = logging.getLogger(LIB_NAME)

DICE_SMOOTH = 1e-6

LOSS_TERMS = ("l_c", "l_in", "l_en", "l_ce", "l_pcl", "total")

ContrastiveResult = namedtuple(
    "ContrastiveResult", ("loss", "anchors_used", "anchors_skipped", "empty")
)


class LossBundle(namedtuple("LossBundle", LOSS_TERMS +
                            ("anchors_used", "anchors_skipped"))):
    """All loss terms of one step.

    total = l_c + lambda1·l_pcl + lambda2·l_ce, with both auxiliary terms
    gated to 0 during warmup.
    """
    __slots__ = ()

    def scalars(self):
        """Loss terms as python floats, keyed by name."""
        return {name: float(getattr(self, name)) for name in LOSS_TERMS}


def _same_shape(a, b, operation):
    if tuple(a.shape) != tuple(b.shape):
        raise ShapeMismatchError(
            f"shapes {tuple(a.shape)} and {tuple(b.shape)} differ", operation
        )


def dice_loss(p, y, smooth=DICE_SMOOTH):
    """Squared-denominator soft dice loss, per image then batch mean.

    1 - (2·Σ p·y + s) / (Σ p² + Σ y² + s) over the H×W pixels of every
    image. A 2D input is treated as a batch of one.
    """
    _same_shape(p, y, "losses.dice_loss")
    if p.dim() == 2:
        p = p.unsqueeze(0)
        y = y.unsqueeze(0)
    y = y.to(p.dtype)
    p = p.flatten(1)
    y = y.flatten(1)

    inter = (p * y).sum(dim=1)
    denom = (p * p).sum(dim=1) + (y * y).sum(dim=1)
    return (1.0 - (2.0 * inter + smooth) / (denom + smooth)).mean()


def certain_loss(outputs, inscribed, envelope):
    """Dual dice loss on the two bounded masks.

    The band pixels get opposite targets from the two terms on purpose.

    Args:
        outputs:
            ModelOutputs, or the foreground probability map itself.
        inscribed:
            y^in, (B, H, W).
        envelope:
            y^en, (B, H, W).

    Returns:
        A tuple of (l_c, l_in, l_en) with l_c = l_in + l_en.
    """
    p = getattr(outputs, "seg_prob", outputs)
    l_in = dice_loss(p, inscribed)
    l_en = dice_loss(p, envelope)
    return l_in + l_en, l_in, l_en


def partial_ce(p, labels, eps=1e-6):
    """Binary cross entropy over labeled pixels only.

    Pixels labeled IGNORE don't contribute. Returns 0 when every pixel is
    ignored.
    """
    _same_shape(p, labels, "losses.partial_ce")
    valid = labels != IGNORE
    if not bool(valid.any()):
        return p.sum() * 0.0

    y = labels[valid].to(p.dtype)
    q = p[valid]
    nll = -(y * torch.log(q + eps) + (1.0 - y) * torch.log(1.0 - q + eps))
    return nll.mean()


def classification_loss(cls_prob, class_label, eps=1e-6):
    """Mean -log P(y^c) over every pixel of the 3-class head."""
    if cls_prob.dim() != 4 or cls_prob.shape[1] != 3 or \
            tuple(cls_prob.shape[:1]) + tuple(cls_prob.shape[2:]) != \
            tuple(class_label.shape):
        raise ShapeMismatchError(
            f"cls_prob {tuple(cls_prob.shape)} does not match labels "
            f"{tuple(class_label.shape)}", "losses.classification_loss"
        )
    picked = cls_prob.gather(1, class_label.long().unsqueeze(1)).squeeze(1)
    return -torch.log(picked + eps).mean()


def contrastive_anchor_losses(anchors, positives, negatives, tau,
                              positive_mask=None):
    """Per-anchor pixel contrastive loss.

    For anchor i:
        -mean_p log[ e^{s_ip} / (e^{s_ip} + (1/|N|)·Σ_n e^{s_in}) ]
    with s = f·f' / tau, computed in log space.

    Args:
        anchors:
            (A, E) anchor embeddings.
        positives:
            (P, E) embeddings sharing the anchors' class.
        negatives:
            (N, E) embeddings of the other class.
        tau:
            temperature.
        positive_mask:
            optional (A, P) bool tensor, False where a positive must be
            ignored for an anchor (the anchor itself).

    Returns:
        A tuple of ((A,) losses, (A,) bool valid), invalid anchors (no
        positive or no negative) have loss 0.
    """
    n_anchor = anchors.shape[0]
    valid = torch.ones(n_anchor, dtype=torch.bool, device=anchors.device)
    if positives.shape[0] == 0 or negatives.shape[0] == 0:
        return anchors.sum(dim=1) * 0.0, valid & False

    sim_pos = anchors @ positives.t() / tau
    sim_neg = anchors @ negatives.t() / tau
    log_neg = torch.logsumexp(sim_neg, dim=1) - math.log(negatives.shape[0])
    log_ratio = sim_pos - torch.logaddexp(sim_pos, log_neg.unsqueeze(1))

    if positive_mask is None:
        positive_mask = torch.ones_like(sim_pos, dtype=torch.bool)
    weight = positive_mask.to(sim_pos.dtype)
    count = weight.sum(dim=1)
    valid = count > 0

    losses = -(log_ratio * weight).sum(dim=1) / count.clamp(min=1.0)
    return losses * valid.to(losses.dtype), valid


def pixel_contrastive_loss(anchors, positives, negatives, tau,
                           positive_mask=None):
    """Mean pixel contrastive loss over the anchors that have both a
    positive and a negative.

    Returns:
        ContrastiveResult; loss is 0 and empty is True when no anchor
        survives.
    """
    losses, valid = contrastive_anchor_losses(anchors, positives, negatives,
                                              tau, positive_mask)
    used = int(valid.sum())
    skipped = int(valid.numel()) - used
    if used == 0:
        return ContrastiveResult(anchors.sum() * 0.0, 0, skipped, True)
    return ContrastiveResult(losses.sum() / used, used, skipped, False)


def batch_contrastive_loss(embed, samples, tau):
    """Pixel contrastive loss over a batch of ContrastiveSample.

    Args:
        embed:
            (B, E, H, W) normalized embeddings.
        samples:
            list of B ContrastiveSample, one per image.
        tau:
            temperature.

    Returns:
        ContrastiveResult averaged over every surviving anchor of the batch.
    """
    flat = embed.flatten(2)
    total = embed.sum() * 0.0
    used = 0
    skipped = 0

    for b, sample in enumerate(samples):
        skipped += sample.skipped
        feats = flat[b].t()
        for label in (0, 1):
            anchor_idx = sample.anchor_index[sample.anchor_label == label]
            if anchor_idx.numel() == 0:
                continue
            pos_idx = sample.positives[label]
            neg_idx = sample.negatives[label]
            mask = pos_idx.unsqueeze(0) != anchor_idx.unsqueeze(1)
            losses, valid = contrastive_anchor_losses(
                feats[anchor_idx], feats[pos_idx], feats[neg_idx], tau, mask
            )
            total = total + losses.sum()
            n_valid = int(valid.sum())
            used += n_valid
            skipped += int(valid.numel()) - n_valid

    if used == 0:
        logger.debug("No contrastive anchor in this batch")
        return ContrastiveResult(total, 0, skipped, True)
    return ContrastiveResult(total / used, used, skipped, False)


def _zero_like(value):
    if isinstance(value, torch.Tensor):
        return torch.zeros_like(value)
    return 0.0


def total_loss(l_c, l_in, l_en, l_pcl, l_ce, weights=None, epoch=0,
               warmup_epochs=0, anchors_used=0, anchors_skipped=0):
    """Combines the loss terms into a LossBundle.

    Before warmup_epochs only l_c trains the network: l_pcl and l_ce are
    reported as 0 and left out of the total.
    """
    if not isinstance(weights, LossWeights):
        weights = LossWeights(weights)

    if epoch < warmup_epochs:
        l_pcl = _zero_like(l_c)
        l_ce = _zero_like(l_c)
        total = l_c
        anchors_used = 0
        anchors_skipped = 0
    else:
        total = l_c + weights.lambda1 * l_pcl + weights.lambda2 * l_ce

    return LossBundle(l_c, l_in, l_en, l_ce, l_pcl, total, anchors_used,
                      anchors_skipped)


def check_finite(bundle, step=None, epoch=None):
    """Raises NonFiniteLossError naming the first NaN/Inf term."""
    for name in LOSS_TERMS:
        value = getattr(bundle, name)
        if isinstance(value, torch.Tensor):
            finite = bool(torch.isfinite(value).all())
        else:
            finite = math.isfinite(value)
        if not finite:
            raise NonFiniteLossError(
                f"{name} is not finite at step {step}, epoch {epoch}",
                "trainer.train", name, step, epoch
            )
    return bundle
