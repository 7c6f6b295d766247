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

from .const import (LIB_NAME, MANIFEST_VERSION, ANNOTATION_KINDS, SPLITS,
                    IGNORE)
from .config import GeneratorParams, GeometryParams
from .exceptions import (BPSegError, InvalidParamsError, MissingFileError,
                         ShapeMismatchError, ConfigMismatchError)
from .geometry import (check_bounded_masks, partition_from_masks,
                       make_bpanno, make_bounded_shape, make_scribble,
                       make_box, box_to_mask, jitter_box, annotation_to_json)
from .util import (derive_seed, save_mask, load_mask, save_image,
                   load_image)

import os
import json
import logging

import numpy as np
import torch
from scipy import ndimage

__all__ = ["SampleRecord", "DatasetManifest", "generate_synthetic",
           "synthesize_sample", "attach_annotations", "load_batch",
           "LOAD_MODES"]

logger = logging.getLogger(LIB_NAME)

LOAD_MODES = ("full_mask", "bounded", "envelope", "scribble", "box",
              "rectangle")


class SampleRecord:
    """One image of the dataset and the files that belong to it.

    Attributes:
        image_id:
            unique id of the sample across all splits.
        image:
            path of the RGB image, relative to the manifest root.
        mask:
            path of the ground truth mask, relative to the manifest root.
        annotations:
            dict mapping an annotation kind to a dict of file references.
        meta:
            generator parameters of the sample (center, r0, harmonics).
    """
    def __init__(self, image_id, image, mask, annotations=None, meta=None):
        self.image_id = image_id
        self.image = image
        self.mask = mask
        self.annotations = dict(annotations or {})
        self.meta = dict(meta or {})

    def to_json(self):
        return {
            "image_id": self.image_id,
            "image": self.image,
            "mask": self.mask,
            "annotations": self.annotations,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data):
        return cls(data["image_id"], data["image"], data["mask"],
                   data.get("annotations"), data.get("meta"))

    def __repr__(self):
        return f"<SampleRecord '{self.image_id}'>"


class DatasetManifest:
    """JSON index of a generated dataset.

    Attributes:
        root:
            directory holding manifest.json and the split directories.
        splits:
            dict mapping train/val/test to a list of SampleRecord.
        generator_seed:
            seed the dataset was generated with.
        generator_params:
            dict of the GeneratorParams used.
        size:
            image height and width in pixels.
        annotation_params:
            dict of the GeometryParams used by attach_annotations, if any.
    """
    FILENAME = "manifest.json"

    def __init__(self, root, splits, generator_seed, generator_params, size,
                 annotation_params=None, version=MANIFEST_VERSION):
        self.root = root
        self.splits = {split: list(splits.get(split, [])) for split in SPLITS}
        self.generator_seed = generator_seed
        self.generator_params = generator_params
        self.size = size
        self.annotation_params = annotation_params
        self.version = version

        ids = [rec.image_id for records in self.splits.values()
               for rec in records]
        if len(ids) != len(set(ids)):
            raise InvalidParamsError("splits share image ids",
                                     "dataset.DatasetManifest")

    def records(self, split):
        if split not in self.splits:
            raise InvalidParamsError(f"unknown split '{split}'",
                                     "dataset.load_batch")
        return self.splits[split]

    def path(self, relpath):
        return os.path.join(self.root, relpath)

    def kinds(self):
        """Annotation kinds attached to every train sample."""
        records = self.splits["train"]
        if not records:
            return set()
        kinds = set(records[0].annotations)
        for rec in records[1:]:
            kinds &= set(rec.annotations)
        return kinds

    def to_json(self):
        return {
            "version": self.version,
            "generator_seed": self.generator_seed,
            "generator_params": self.generator_params,
            "size": self.size,
            "annotation_params": self.annotation_params,
            "splits": {
                split: [rec.to_json() for rec in records]
                for split, records in self.splits.items()
            },
        }

    def save(self):
        path = os.path.join(self.root, self.FILENAME)
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1, sort_keys=True)
        return path

    @classmethod
    def load(cls, path):
        """Loads a manifest from its JSON file or from its directory."""
        if os.path.isdir(path):
            path = os.path.join(path, cls.FILENAME)
        if not os.path.isfile(path):
            raise MissingFileError(f"manifest {path} does not exist",
                                   "dataset.load_manifest", path)
        with open(path) as f:
            data = json.load(f)

        splits = {
            split: [SampleRecord.from_json(rec) for rec in records]
            for split, records in data["splits"].items()
        }
        return cls(os.path.dirname(os.path.abspath(path)), splits,
                   data["generator_seed"], data["generator_params"],
                   data["size"], data.get("annotation_params"),
                   data.get("version", MANIFEST_VERSION))

    def __len__(self):
        return sum(len(records) for records in self.splits.values())

    def __repr__(self):
        counts = "/".join(str(len(self.splits[s])) for s in SPLITS)
        return f"<DatasetManifest {counts} at '{self.root}'>"


def synthesize_sample(rng, size, params):
    """Draws one synthetic lesion image and its exact mask.

    The lesion is a star-shaped blob with radius
    r(θ) = r0·(1 + Σ_k a_k cos(kθ + φ_k)), rendered darker than a textured
    background with a blurred rim and additive noise.

    Returns:
        A tuple of (image, mask, meta); image is H×W×3 float in [0, 1].
    """
    operation = "dataset.generate_synthetic"
    harmonics = int(params.harmonics)
    half = size / 2.0

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5

    for _ in range(50):
        weights = rng.uniform(0.0, 1.0, harmonics) / np.arange(1, harmonics + 1)
        total = params.amplitude * rng.uniform(0.5, 1.0)
        amps = weights / weights.sum() * total if total > 0 else \
            np.zeros(harmonics)
        phases = rng.uniform(0.0, 2 * np.pi, harmonics)

        r_hi = min(params.radius_max * size,
                   (half - params.margin) / (1.0 + total))
        r_lo = min(params.radius_min * size, r_hi)
        r0 = rng.uniform(r_lo, r_hi)

        jitter = max(0.0, half - params.margin - r0 * (1.0 + total))
        center = half + rng.uniform(-jitter, jitter, 2)

        dx = xx - center[0]
        dy = yy - center[1]
        theta = np.arctan2(dy, dx)
        k = np.arange(1, harmonics + 1)[:, None, None]
        radius = r0 * (1.0 + (amps[:, None, None] *
                              np.cos(k * theta + phases[:, None, None])
                              ).sum(axis=0))
        mask = (np.hypot(dx, dy) <= radius).astype(np.uint8)

        _, n = ndimage.label(mask)
        area = mask.mean()
        if n == 1 and params.min_area <= area <= params.max_area:
            break
    else:
        raise InvalidParamsError("could not draw a lesion within the area "
                                 "limits, check the generator params",
                                 operation)

    background = rng.uniform(0.55, 0.85, 3)
    foreground = np.clip(
        background - params.contrast * rng.uniform(0.7, 1.0, 3), 0.0, 1.0
    )

    texture = ndimage.gaussian_filter(
        rng.standard_normal((size, size, 3)),
        sigma=(size / 12.0, size / 12.0, 0)
    )
    texture /= texture.std() + 1e-12

    alpha = mask.astype(np.float64)
    if params.blur > 0:
        alpha = ndimage.gaussian_filter(alpha, params.blur)

    image = background * (1.0 - alpha[..., None]) + \
        foreground * alpha[..., None]
    image += 0.04 * texture
    image += params.noise * rng.standard_normal((size, size, 3))
    image = np.clip(image, 0.0, 1.0)

    meta = {
        "center": [float(c) for c in center],
        "r0": float(r0),
        "amplitudes": [float(a) for a in amps],
        "phases": [float(p) for p in phases],
    }
    return image, mask, meta


def generate_synthetic(out_dir, n, size=64, seed=0, params=None):
    """Generates a deterministic synthetic lesion dataset on disk.

    Every sample draws from its own stream spawned from the seed, so a
    sample doesn't depend on how many others are generated before it.

    Args:
        out_dir:
            directory to write the split directories and manifest.json to.
        n:
            total number of samples, split by params.val_fraction and
            params.test_fraction (default 200/50/50 for n=300).
        size:
            image height and width in pixels.
        seed:
            root seed.
        params:
            GeneratorParams or a dict of its keys.

    Returns:
        The saved DatasetManifest.

    Raises:
        InvalidParamsError
    """
    operation = "dataset.generate_synthetic"
    if not isinstance(params, GeneratorParams):
        params = GeneratorParams(params)
    if n < 1:
        raise InvalidParamsError(f"n must be >= 1, got {n}", operation)
    if size < 32:
        raise InvalidParamsError(f"size must be >= 32, got {size}",
                                 operation)

    n_val = int(round(n * params.val_fraction))
    n_test = int(round(n * params.test_fraction))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise InvalidParamsError("no sample left for the train split",
                                 operation)

    plan = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
    streams = np.random.SeedSequence(seed).spawn(n)

    splits = {split: [] for split in SPLITS}
    for split in SPLITS:
        os.makedirs(os.path.join(out_dir, split), exist_ok=True)

    for index, (split, stream) in enumerate(zip(plan, streams)):
        rng = np.random.default_rng(stream)
        image, mask, meta = synthesize_sample(rng, size, params)

        image_id = f"{split}_{index:05d}"
        image_path = os.path.join(split, f"{image_id}.png")
        mask_path = os.path.join(split, f"{image_id}_mask.png")
        save_image(os.path.join(out_dir, image_path), image)
        save_mask(os.path.join(out_dir, mask_path), mask)

        splits[split].append(
            SampleRecord(image_id, image_path, mask_path, meta=meta)
        )

    manifest = DatasetManifest(os.path.abspath(out_dir), splits, seed,
                               params.to_dict(), size)
    manifest.save()

    logger.info(f"Generated {n_train}/{n_val}/{n_test} samples of "
                f"{size}x{size} into {out_dir}")
    return manifest


def _write_json(path, data):
    with open(path, "w") as f:
        json.dump(data, f, indent=1, sort_keys=True)


def _annotate(manifest, rec, index, kind, geometry):
    """Generates one annotation kind for one record and writes its files."""
    gt = load_mask(manifest.path(rec.mask))
    height, width = gt.shape
    base = os.path.join("annotations", rec.image_id)

    def out(suffix):
        return f"{base}_{suffix}"

    if kind == "mask":
        return {"mask": rec.mask}

    if kind in ("bpanno", "bprect", "bpellipse"):
        if kind == "bpanno":
            anno = make_bpanno(gt, geometry.radius, geometry.epsilon,
                               geometry.vertex_cap, geometry.repair_rounds)
        else:
            shape = "rectangle" if kind == "bprect" else "ellipse"
            anno = make_bounded_shape(gt, geometry.radius, shape)

        files = {
            "json": out(f"{kind}.json"),
            "inscribed": out(f"{kind}_inscribed.png"),
            "envelope": out(f"{kind}_envelope.png"),
        }
        _write_json(manifest.path(files["json"]),
                    annotation_to_json(anno, rec.image_id, kind))
        save_mask(manifest.path(files["inscribed"]), anno.inscribed_mask)
        save_mask(manifest.path(files["envelope"]), anno.envelope_mask)
        return files

    if kind == "scribble":
        scribble = make_scribble(
            gt, geometry.n_lines, geometry.thickness,
            derive_seed(manifest.generator_seed, index, 1)
        )
        files = {
            "json": out("scribble.json"),
            "foreground": out("scribble_fg.png"),
            "background": out("scribble_bg.png"),
        }
        _write_json(manifest.path(files["json"]), {
            "image_id": rec.image_id,
            "height": height,
            "width": width,
            "thickness": geometry.thickness,
            "lines": [{"label": label, "start": list(start),
                       "end": list(end)}
                      for label, start, end in scribble.lines],
        })
        save_mask(manifest.path(files["foreground"]), scribble.foreground)
        save_mask(manifest.path(files["background"]), scribble.background)
        return files

    if kind in ("box", "rectangle"):
        box = make_box(gt)
        if kind == "box":
            rng = np.random.default_rng(
                derive_seed(manifest.generator_seed, index, 2))
            box = jitter_box(box, geometry.box_jitter, rng, height, width)
        files = {
            "json": out(f"{kind}.json"),
            "mask": out(f"{kind}.png"),
        }
        _write_json(manifest.path(files["json"]), {
            "image_id": rec.image_id,
            "height": height,
            "width": width,
            "box": [list(box[0]), list(box[1])],
        })
        save_mask(manifest.path(files["mask"]),
                  box_to_mask(box, height, width))
        return files

    raise InvalidParamsError(f"unknown annotation kind '{kind}'",
                             "dataset.attach_annotations")


def attach_annotations(manifest, kinds, params=None):
    """Generates weak annotations for every train sample.

    val and test samples keep their dense masks only, evaluation is always
    against the ground truth.

    Args:
        manifest:
            DatasetManifest to annotate, saved again afterwards.
        kinds:
            iterable of annotation kinds, see ANNOTATION_KINDS.
        params:
            GeometryParams or a dict of its keys.

    Raises:
        InvalidParamsError:
            on unknown kinds.
        BPSegError:
            geometry errors, with the image id prepended to the message.
    """
    operation = "dataset.attach_annotations"
    kinds = set(kinds)
    unknown = kinds - set(ANNOTATION_KINDS)
    if unknown or not kinds:
        raise InvalidParamsError(f"unknown annotation kinds {sorted(unknown)}"
                                 if unknown else "no annotation kind given",
                                 operation)
    if not isinstance(params, GeometryParams):
        params = GeometryParams(params)

    os.makedirs(manifest.path("annotations"), exist_ok=True)

    for index, rec in enumerate(manifest.records("train")):
        for kind in sorted(kinds):
            try:
                rec.annotations[kind] = _annotate(manifest, rec, index, kind,
                                                  params)
            except BPSegError as e:
                e.message = f"[{rec.image_id}] {e.message}"
                e.args = (f"{e.operation}: {e.message}",)
                raise

    manifest.annotation_params = params.to_dict()
    manifest.save()

    logger.info(f"Attached {sorted(kinds)} to "
                f"{len(manifest.records('train'))} train samples")
    return manifest


def _check_shape(arr, shape, what, image_id):
    if arr.shape != shape:
        raise ShapeMismatchError(
            f"{image_id}: {what} has shape {arr.shape}, expected {shape}",
            "dataset.load_batch"
        )
    return arr


def _require_kind(rec, kind):
    files = rec.annotations.get(kind)
    if files is None:
        raise ConfigMismatchError(
            f"{rec.image_id} has no '{kind}' annotation",
            "dataset.load_batch"
        )
    return files


def load_batch(manifest, split, indices, mode="full_mask", kind="bpanno"):
    """Loads a batch of samples as torch tensors.

    Args:
        manifest:
            DatasetManifest to read from.
        split:
            train, val or test.
        indices:
            sample indices within the split.
        mode:
            one of LOAD_MODES. full_mask loads the dense masks, bounded the
            inscribed/envelope masks of the given kind plus the region
            partition, envelope only y^en, scribble a label map with IGNORE
            on unlabeled pixels, box/rectangle the filled shape.
        kind:
            bounded annotation kind for the bounded and envelope modes.

    Returns:
        dict with "image_ids" and tensors "images" (B, 3, H, W) and, per
        mode, "masks" / "inscribed" / "envelope" (B, H, W) float32 and
        "region" / "labels" (B, H, W) int64.

    Raises:
        MissingFileError, ShapeMismatchError, ConfigMismatchError
    """
    operation = "dataset.load_batch"
    if mode not in LOAD_MODES:
        raise InvalidParamsError(f"unknown load mode '{mode}'", operation)

    records = manifest.records(split)
    fields = {}
    image_ids = []

    def add(key, value):
        fields.setdefault(key, []).append(value)

    for index in indices:
        if not 0 <= index < len(records):
            raise InvalidParamsError(
                f"index {index} out of range for split '{split}' "
                f"({len(records)} samples)", operation
            )
        rec = records[index]
        image = load_image(manifest.path(rec.image))
        shape = image.shape[:2]
        image_ids.append(rec.image_id)
        add("images", image.transpose(2, 0, 1))

        if mode == "full_mask":
            mask = load_mask(manifest.path(rec.mask))
            add("masks", _check_shape(mask, shape, "mask", rec.image_id))

        elif mode in ("bounded", "envelope"):
            files = _require_kind(rec, kind)
            inscribed = _check_shape(
                load_mask(manifest.path(files["inscribed"])), shape,
                "inscribed mask", rec.image_id)
            envelope = _check_shape(
                load_mask(manifest.path(files["envelope"])), shape,
                "envelope mask", rec.image_id)
            inscribed, envelope = check_bounded_masks(inscribed, envelope,
                                                      operation)
            if mode == "envelope":
                add("masks", envelope)
            else:
                add("inscribed", inscribed)
                add("envelope", envelope)
                add("region",
                    partition_from_masks(inscribed, envelope).region_label)

        elif mode == "scribble":
            files = _require_kind(rec, "scribble")
            fg = _check_shape(load_mask(manifest.path(files["foreground"])),
                              shape, "foreground scribble", rec.image_id)
            bg = _check_shape(load_mask(manifest.path(files["background"])),
                              shape, "background scribble", rec.image_id)
            labels = np.full(shape, IGNORE, dtype=np.int64)
            labels[bg == 1] = 0
            labels[fg == 1] = 1
            add("labels", labels)

        else:
            files = _require_kind(rec, mode)
            mask = load_mask(manifest.path(files["mask"]))
            add("masks", _check_shape(mask, shape, f"{mode} mask",
                                      rec.image_id))

    batch = {"image_ids": image_ids}
    for key, values in fields.items():
        arr = np.stack(values)
        if key in ("region", "labels"):
            batch[key] = torch.from_numpy(arr.astype(np.int64))
        else:
            batch[key] = torch.from_numpy(arr.astype(np.float32))
    return batch
