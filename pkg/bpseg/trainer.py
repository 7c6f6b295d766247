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

from .const import LIB_NAME, BAND
from .config import TrainConfig, dump_config
from .confidence import (compute_confidence, confidence_fractions,
                         select_samples, FRACTION_KEYS)
from .dataset import load_batch
from .evaluation import (evaluate_model, evaluate_checkpoint, summarize_seeds,
                         METRIC_KEYS)
from .exceptions import ConfigMismatchError, InvalidParamsError
from .losses import (LossBundle, LOSS_TERMS, dice_loss, certain_loss,
                     partial_ce, classification_loss, batch_contrastive_loss,
                     total_loss, check_finite)
from .model import build_model, save_checkpoint
from .prefetch import BatchPrefetcher
from .util import derive_seed, seed_everything, write_csv

import os
import logging
from collections import namedtuple

import numpy as np
import torch

__all__ = ["TrainResult", "train", "step_losses", "batch_plan",
           "required_kind", "check_manifest", "ablation_suite",
           "ABLATION_VARIANTS", "LOSS_LOG_KEYS", "VAL_LOG_KEYS",
           "CONFIDENCE_LOG_KEYS", "ABLATION_KEYS"]

logger = logging.getLogger(LIB_NAME)

# supervision mode -> load_batch mode
MODE_LOAD = {
    "full_mask": "full_mask",
    "bpanno_baseline": "bounded",
    "eauwseg": "bounded",
    "scribble_pce": "scribble",
    "box": "box",
    "rectangle": "rectangle",
    "envelope_only": "envelope",
}

LOSS_LOG_KEYS = ("step", "epoch") + LOSS_TERMS + ("anchors_used",
                                                   "anchors_skipped")
VAL_LOG_KEYS = ("epoch", "val_dice", "best")
CONFIDENCE_LOG_KEYS = ("epoch", "band_pixels") + FRACTION_KEYS
ABLATION_KEYS = ("variant", "seed") + METRIC_KEYS + ("checkpoint",)

ABLATION_VARIANTS = (
    ("baseline", {"supervision_mode": "bpanno_baseline"}),
    ("+CCL", {"supervision_mode": "eauwseg", "weights.lambda2": 0.0,
              "use_class_confidence": False}),
    ("+CCL+CCG", {"supervision_mode": "eauwseg"}),
)

TrainResult = namedtuple(
    "TrainResult",
    ("checkpoint", "last_checkpoint", "best_epoch", "best_val_dice",
     "loss_log", "val_log", "confidence_log", "out_dir")
)


def required_kind(config):
    """Annotation kind a supervision mode reads, None for dense masks."""
    load_mode = MODE_LOAD[config.supervision_mode]
    if load_mode in ("bounded", "envelope"):
        return config.annotation_kind
    if load_mode == "full_mask":
        return None
    return load_mode


def check_manifest(manifest, config):
    """Checks that every train sample carries what the mode needs.

    Raises:
        ConfigMismatchError
    """
    operation = "trainer.train"
    records = manifest.records("train")
    if not records:
        raise ConfigMismatchError("manifest has no train samples", operation)

    kind = required_kind(config)
    if kind is None:
        return
    missing = [rec.image_id for rec in records if kind not in rec.annotations]
    if missing:
        raise ConfigMismatchError(
            f"supervision_mode '{config.supervision_mode}' needs '{kind}' "
            f"annotations, missing on {len(missing)} train samples "
            f"(first: {missing[0]})", operation
        )


def batch_plan(n, batch_size, seed, epoch):
    """Shuffled index batches of one epoch, the last one may be short."""
    order = np.random.default_rng(derive_seed(seed, epoch)).permutation(n)
    return [order[i:i + batch_size].tolist()
            for i in range(0, n, batch_size)]


def _zero(reference):
    return torch.zeros((), dtype=reference.dtype)


def _single_term(loss, l_in=None, l_en=None):
    zero = _zero(loss)
    return LossBundle(loss, zero if l_in is None else l_in,
                      zero if l_en is None else l_en, zero, zero, loss, 0, 0)


def step_losses(outputs, batch, config, epoch, step):
    """Loss terms of one training step for the configured mode.

    The dense, box, rectangle and envelope modes train a single dice term,
    scribble_pce the partial cross entropy; their loss is reported as l_c.
    eauwseg adds the contrastive and classification terms once the warmup
    is over.

    Returns:
        A tuple of (LossBundle, confidence fractions or None).
    """
    mode = config.supervision_mode
    p = outputs.seg_prob

    if mode in ("full_mask", "box", "rectangle"):
        return _single_term(dice_loss(p, batch["masks"])), None
    if mode == "envelope_only":
        loss = dice_loss(p, batch["masks"])
        return _single_term(loss, l_en=loss), None
    if mode == "scribble_pce":
        return _single_term(partial_ce(p, batch["labels"],
                                       config.weights.eps)), None

    l_c, l_in, l_en = certain_loss(p, batch["inscribed"], batch["envelope"])
    if mode == "bpanno_baseline":
        return _single_term(l_c, l_in, l_en), None

    if epoch < config.warmup_epochs:
        return total_loss(l_c, l_in, l_en, None, None, config.weights,
                          epoch, config.warmup_epochs), None

    region = batch["region"]
    maps = compute_confidence(outputs, region, config.mu,
                              config.weights.eps,
                              config.use_class_confidence)
    samples = [
        select_samples(p[b], region[b], maps.pseudo_label[b], config.caps,
                       derive_seed(config.seed, step, b))
        for b in range(p.shape[0])
    ]
    contrastive = batch_contrastive_loss(outputs.embed, samples,
                                         config.weights.tau)
    if config.use_class_confidence:
        l_ce = classification_loss(outputs.cls_prob, region,
                                   config.weights.eps)
    else:
        l_ce = _zero(l_c)

    bundle = total_loss(l_c, l_in, l_en, contrastive.loss, l_ce,
                        config.weights, epoch, config.warmup_epochs,
                        contrastive.anchors_used, contrastive.anchors_skipped)
    fractions = confidence_fractions(maps.fused, region == BAND)
    return bundle, fractions


def _batches(manifest, plan, load_mode, kind, prefetch, epoch):
    def loader(indices):
        return load_batch(manifest, "train", indices, load_mode, kind)

    if prefetch <= 0:
        return (loader(indices) for indices in plan)
    return BatchPrefetcher(loader, plan, prefetch,
                           name=f"prefetch-{epoch}").batch_generator()


def _merge_fractions(acc, fractions):
    n = fractions["band_pixels"]
    acc["band_pixels"] += n
    for key in FRACTION_KEYS:
        acc[key] += fractions[key] * n


def train(manifest, config, out_dir):
    """Trains a BPSegNet on the train split of a manifest.

    Writes into out_dir:
        resolved_config.txt, loss_log.csv (one row per step),
        val_log.csv (one row per epoch), confidence_log.csv (eauwseg only),
        checkpoint_best.pt (best validation Dice) and checkpoint_last.pt.

    Everything random flows from config.seed and the numeric path runs on
    config.num_threads CPU threads with deterministic algorithms, so two
    runs with the same config write identical logs.

    Returns:
        TrainResult

    Raises:
        ConfigMismatchError, NonFiniteLossError
    """
    if not isinstance(config, TrainConfig):
        config = TrainConfig(config)
    check_manifest(manifest, config)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.txt"), "w") as f:
        f.write(dump_config(config))

    threads = torch.get_num_threads()
    deterministic = torch.are_deterministic_algorithms_enabled()
    torch.set_num_threads(config.num_threads)
    torch.use_deterministic_algorithms(True, warn_only=True)
    try:
        return _train(manifest, config, out_dir)
    finally:
        torch.set_num_threads(threads)
        torch.use_deterministic_algorithms(deterministic)


def _train(manifest, config, out_dir):
    seed_everything(config.seed)
    model = build_model(config.model.replace(seed=config.seed))
    optimizer = torch.optim.Adam(model.parameters(),
                                 lr=config.learning_rate)

    load_mode = MODE_LOAD[config.supervision_mode]
    kind = config.annotation_kind
    n_train = len(manifest.records("train"))
    has_val = bool(manifest.records("val"))
    if not has_val:
        logger.warning("No val split, keeping the last epoch as best")

    best_path = os.path.join(out_dir, "checkpoint_best.pt")
    last_path = os.path.join(out_dir, "checkpoint_last.pt")
    loss_log = []
    val_log = []
    confidence_log = []
    best_dice = None
    best_epoch = None
    step = 0

    logger.info(f"Training '{config.supervision_mode}' for {config.epochs} "
                f"epochs on {n_train} samples (warmup "
                f"{config.warmup_epochs}, seed {config.seed})")

    for epoch in range(config.epochs):
        model.train()
        plan = batch_plan(n_train, config.batch_size, config.seed, epoch)
        fractions = dict.fromkeys(CONFIDENCE_LOG_KEYS[1:], 0)
        epoch_total = 0.0

        for batch in _batches(manifest, plan, load_mode, kind,
                              config.prefetch, epoch):
            outputs = model(batch["images"])
            bundle, step_fractions = step_losses(outputs, batch, config,
                                                 epoch, step)
            check_finite(bundle, step, epoch)

            optimizer.zero_grad(set_to_none=True)
            bundle.total.backward()
            optimizer.step()

            row = {"step": step, "epoch": epoch}
            row.update(bundle.scalars())
            row["anchors_used"] = bundle.anchors_used
            row["anchors_skipped"] = bundle.anchors_skipped
            loss_log.append(row)
            logger.debug(f"step {step}: total {row['total']:.6f}")

            if step_fractions is not None:
                _merge_fractions(fractions, step_fractions)
            epoch_total += row["total"]
            step += 1

        if fractions["band_pixels"]:
            entry = {"epoch": epoch, "band_pixels": fractions["band_pixels"]}
            for key in FRACTION_KEYS:
                entry[key] = fractions[key] / fractions["band_pixels"]
            confidence_log.append(entry)

        if has_val:
            report = evaluate_model(model, manifest, "val",
                                    config.batch_size)
            val_dice = report.mean["dice"]
        else:
            val_dice = None
        improved = best_dice is None or val_dice is None or \
            val_dice > best_dice
        if improved:
            best_dice = val_dice
            best_epoch = epoch
            save_checkpoint(best_path, model, config,
                            {"epoch": epoch, "val_dice": val_dice})
        val_log.append({"epoch": epoch, "val_dice": val_dice,
                        "best": int(improved)})

        logger.info(f"Epoch {epoch + 1}/{config.epochs}: mean loss "
                    f"{epoch_total / max(1, len(plan)):.4f}, val dice "
                    f"{val_dice}")

    save_checkpoint(last_path, model, config,
                    {"epoch": config.epochs - 1, "val_dice": val_dice})

    write_csv(os.path.join(out_dir, "loss_log.csv"), LOSS_LOG_KEYS,
              loss_log, "trainer.train")
    write_csv(os.path.join(out_dir, "val_log.csv"), VAL_LOG_KEYS, val_log,
              "trainer.train")
    if config.supervision_mode == "eauwseg":
        write_csv(os.path.join(out_dir, "confidence_log.csv"),
                  CONFIDENCE_LOG_KEYS, confidence_log, "trainer.train")

    logger.info(f"Best epoch {best_epoch} with val dice {best_dice}, "
                f"checkpoint {best_path}")
    return TrainResult(best_path, last_path, best_epoch, best_dice, loss_log,
                       val_log, confidence_log, out_dir)


def ablation_suite(manifest, base_config, out_dir, seeds=(0, 1, 2),
                   split="test"):
    """Trains the baseline, +CCL and +CCL+CCG variants over several seeds.

    Every variant is trained from base_config with the same seeds, then its
    best checkpoint is evaluated on split.

    Returns:
        A tuple of (rows, summary): one row per variant and seed keyed by
        ABLATION_KEYS, and the mean ± std summary per variant.

    Raises:
        ConfigMismatchError, NonFiniteLossError
    """
    if not isinstance(base_config, TrainConfig):
        base_config = TrainConfig(base_config)
    seeds = list(seeds)
    if not seeds:
        raise InvalidParamsError("no seed given", "trainer.ablation_suite")

    rows = []
    for name, overrides in ABLATION_VARIANTS:
        for seed in seeds:
            config = base_config.replace(seed=seed, **overrides)
            run_dir = os.path.join(out_dir, f"{_slug(name)}_seed{seed}")
            logger.info(f"Ablation variant {name}, seed {seed}")
            result = train(manifest, config, run_dir)
            report = evaluate_checkpoint(result.checkpoint, manifest, split,
                                         config.batch_size)
            row = {"variant": name, "seed": seed,
                   "checkpoint": result.checkpoint}
            row.update(report.mean)
            rows.append(row)

    summary = summarize_seeds(rows)
    for entry in summary:
        logger.info(f"{entry['variant']}: dice {entry['dice_mean']} "
                    f"± {entry['dice_std']} over {entry['n_seeds']} seeds")
    return rows, summary


def _slug(name):
    return name.replace("+", "_plus_").strip("_").lower()
