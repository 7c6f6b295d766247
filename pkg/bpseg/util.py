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

from .const import LIB_NAME
from .exceptions import MissingFileError, ReportIOError, InvalidParamsError

import os
import csv
import random
import shutil
import logging
from threading import Thread, Event

import numpy as np
from PIL import Image

__all__ = ["derive_seed", "seed_everything", "save_mask", "load_mask",
           "save_image", "load_image", "write_csv", "read_csv",
           "prepare_out_dir"]

logger = logging.getLogger(LIB_NAME)


class StoppableThread(Thread):
    def __init__(self, *args, **kwargs):
        super(StoppableThread, self).__init__(*args, **kwargs)
        self.stop_flag = Event()

    def stop(self):
        self.stop_flag.set()


def derive_seed(seed, *keys):
    """Derives an independent integer seed from a root seed and int keys.

    Used so that every sample, step or image gets its own stream while the
    whole run still flows from a single configured seed.
    """
    seq = np.random.SeedSequence([int(seed)] + [int(key) for key in keys])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def seed_everything(seed):
    """Seeds python, numpy and torch global generators."""
    import torch

    random.seed(seed)
    np.random.seed(derive_seed(seed) % (2 ** 32))
    torch.manual_seed(seed)


def save_mask(path, mask):
    """Writes a binary mask as an 8-bit single channel image (0/255)."""
    data = (np.asarray(mask) > 0).astype(np.uint8) * 255
    Image.fromarray(data, mode="L").save(path)


def load_mask(path):
    if not os.path.isfile(path):
        raise MissingFileError(f"mask file {path} does not exist",
                               "dataset.load_batch", path)
    data = np.asarray(Image.open(path).convert("L"))
    return (data > 127).astype(np.uint8)


def save_image(path, image):
    """Writes an H×W×3 image with values in [0, 1] as 8-bit RGB."""
    data = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255)
    Image.fromarray(data.astype(np.uint8), mode="RGB").save(path)


def load_image(path):
    if not os.path.isfile(path):
        raise MissingFileError(f"image file {path} does not exist",
                               "dataset.load_batch", path)
    data = np.asarray(Image.open(path).convert("RGB"))
    return data.astype(np.float32) / 255.0


def write_csv(path, header, rows, operation="evaluation.emit_report"):
    """Writes rows (dicts or sequences) to a CSV file with a header line."""
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                if isinstance(row, dict):
                    row = [row.get(key) for key in header]
                writer.writerow(["" if value is None else _fmt(value)
                                 for value in row])
    except OSError as e:
        raise ReportIOError(f"failed to write {path}: {e}", operation)


def read_csv(path):
    """Reads a CSV written by write_csv back into a list of dicts.

    Numeric cells are converted back to int/float, empty cells to None.
    """
    with open(path, newline="") as f:
        return [
            {key: _parse(value) for key, value in row.items()}
            for row in csv.DictReader(f)
        ]


def prepare_out_dir(path, force=False):
    """Creates the output directory, refusing non-empty ones unless force."""
    if os.path.isdir(path) and os.listdir(path):
        if not force:
            raise InvalidParamsError(
                f"output directory {path} is not empty, use --force",
                "cli.run"
            )
        logger.warning(f"Clearing output directory {path}")
        shutil.rmtree(path)
    os.makedirs(path, exist_ok=True)
    return path


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def _parse(value):
    if value is None or value == "":
        return None
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value
