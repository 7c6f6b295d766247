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

from .const import (DEFAULT_MU, DEFAULT_RADIUS, DEFAULT_EPSILON,
                    DEFAULT_VERTEX_CAP, SUPERVISION_MODES, BOUNDED_KINDS)
from .exceptions import InvalidConfigError, InvalidParamsError

import json
import numbers

import numpy as np

__all__ = ["ConfigObject", "LossWeights", "Caps", "ModelConfig",
           "GeometryParams", "GeneratorParams", "TrainConfig",
           "parse_config_text", "load_config", "dump_config",
           "parse_overrides"]


class ConfigObject:
    """Object which sets its attributes from a dict over a declared key list.

    Keys missing from the dict get their default from KEYS, keys that are not
    declared are rejected. Nested groups are declared in SECTIONS and can be
    given either as a dict or with dotted keys in a flat dict.

    Attributes:
        KEYS:
            dict mapping every plain key to its default value.
        SECTIONS:
            dict mapping a group name to the ConfigObject class holding it.
        ERROR:
            Exception class raised by validate.
        OPERATION:
            operation name used in raised errors.
    """
    KEYS = {}
    SECTIONS = {}
    ERROR = InvalidConfigError
    OPERATION = "config"

    def __init__(self, data=None, **kwargs):
        data = dict(data or {})
        data.update(kwargs)
        data = self._nest(data)

        for key, default in self.KEYS.items():
            setattr(self, key, default)
        for key, cls in self.SECTIONS.items():
            setattr(self, key, cls())

        for key, value in data.items():
            if key in self.SECTIONS:
                cls = self.SECTIONS[key]
                if not isinstance(value, cls):
                    if not isinstance(value, dict):
                        raise self.ERROR(f"'{key}' is a group",
                                         self.OPERATION)
                    value = cls(value)
                setattr(self, key, value)
            elif key in self.KEYS:
                setattr(self, key, value)
            else:
                raise self.ERROR(f"unknown key '{key}'", self.OPERATION)

        self._check_types()
        self.validate()

    def _check_types(self):
        """Coerces every plain key to the type of its default.

        Ints are accepted for float keys and integral floats for int keys,
        bools only for bool keys. A None default allows None or an int.
        """
        for key, default in self.KEYS.items():
            value = getattr(self, key)
            if default is None and value is None:
                continue
            kind = int if default is None else type(default)
            setattr(self, key, self._coerce(key, value, kind))

    def _coerce(self, key, value, kind):
        number = isinstance(value, numbers.Real) and \
            not isinstance(value, (bool, np.bool_))
        if kind is bool and isinstance(value, bool):
            return value
        if kind is int and number and float(value).is_integer():
            return int(value)
        if kind is float and number:
            return float(value)
        if kind not in (bool, int, float) and isinstance(value, kind):
            return value
        raise self.ERROR(f"{key} must be {kind.__name__}, got {value!r}",
                         self.OPERATION)

    def _nest(self, data):
        nested = {}
        for key, value in data.items():
            if "." in key:
                section, subkey = key.split(".", 1)
                nested.setdefault(section, {})
                if not isinstance(nested[section], dict):
                    raise self.ERROR(f"'{section}' is not a group",
                                     self.OPERATION)
                nested[section][subkey] = value
            else:
                nested[key] = value
        return nested

    def validate(self):
        """Checks the invariants. Should be overridden by the subclass."""
        pass

    def _require(self, condition, message):
        if not condition:
            raise self.ERROR(message, self.OPERATION)

    def to_dict(self):
        data = {key: getattr(self, key) for key in self.KEYS}
        for key in self.SECTIONS:
            data[key] = getattr(self, key).to_dict()
        return data

    def flatten(self):
        """Returns the config as a flat dict with dotted group keys."""
        data = {key: getattr(self, key) for key in self.KEYS}
        for key in self.SECTIONS:
            for subkey, value in getattr(self, key).flatten().items():
                data[f"{key}.{subkey}"] = value
        return data

    def replace(self, **kwargs):
        """Returns a copy with some keys replaced, dotted keys allowed."""
        data = self.flatten()
        data.update(kwargs)
        return self.__class__(data)

    def __eq__(self, other):
        return type(self) is type(other) and \
            self.flatten() == other.flatten()

    def __repr__(self):
        items = ", ".join(f"{key}={value!r}"
                          for key, value in self.flatten().items())
        return f"<{self.__class__.__name__} {items}>"


class LossWeights(ConfigObject):
    KEYS = {
        "lambda1": 0.3,
        "lambda2": 0.5,
        "tau": 0.1,
        "eps": 1e-6,
    }
    OPERATION = "losses.LossWeights"

    def validate(self):
        self._require(self.lambda1 >= 0, "lambda1 must be >= 0")
        self._require(self.lambda2 >= 0, "lambda2 must be >= 0")
        self._require(self.tau > 0, "tau must be > 0")
        self._require(self.eps > 0, "eps must be > 0")


class Caps(ConfigObject):
    """Per-image sampling caps of the contrastive learner."""
    KEYS = {
        "anchors": 256,
        "positives": 256,
        "negatives": 512,
    }
    OPERATION = "confidence.select_samples"

    def validate(self):
        for key in self.KEYS:
            self._require(int(getattr(self, key)) >= 1,
                          f"caps.{key} must be >= 1")


class ModelConfig(ConfigObject):
    """Network size of the segmentation model.

    Encoder stage i has base_channels·2^i channels. The defaults (base 16,
    depth 3, embed 32) give about 0.32M parameters and train in minutes on a
    CPU at 64x64. For a network near 100k parameters set base_channels to 8,
    which gives about 80k.
    """
    KEYS = {
        "in_channels": 3,
        "base_channels": 16,
        "depth": 3,
        "embed_dim": 32,
        "seed": 0,
    }
    OPERATION = "model.build_model"

    def validate(self):
        self._require(self.in_channels >= 1, "in_channels must be >= 1")
        self._require(self.base_channels >= 1, "base_channels must be >= 1")
        self._require(self.depth >= 1, "depth must be >= 1")
        self._require(self.embed_dim >= 1, "embed_dim must be >= 1")


class GeometryParams(ConfigObject):
    KEYS = {
        "radius": DEFAULT_RADIUS,
        "epsilon": DEFAULT_EPSILON,
        "vertex_cap": DEFAULT_VERTEX_CAP,
        "n_lines": 1,
        "thickness": 2,
        "box_jitter": 0,
        "repair_rounds": 8,
    }
    ERROR = InvalidParamsError
    OPERATION = "dataset.attach_annotations"

    def validate(self):
        self._require(self.radius >= 1, "radius must be >= 1")
        self._require(self.epsilon >= 0, "epsilon must be >= 0")
        self._require(self.vertex_cap >= 3, "vertex_cap must be >= 3")
        self._require(self.n_lines >= 1, "n_lines must be >= 1")
        self._require(self.thickness >= 1, "thickness must be >= 1")
        self._require(self.box_jitter >= 0, "box_jitter must be >= 0")


class GeneratorParams(ConfigObject):
    """Settings of the synthetic lesion generator.

    The blob radius is r(θ) = r0·(1 + Σ a_k cos(kθ + φ_k)) with r0 drawn from
    [radius_min, radius_max]·size and Σ|a_k| ≤ amplitude.
    """
    KEYS = {
        "val_fraction": 1 / 6,
        "test_fraction": 1 / 6,
        "radius_min": 0.28,
        "radius_max": 0.36,
        "amplitude": 0.25,
        "harmonics": 4,
        "margin": 5,
        "noise": 0.05,
        "blur": 1.0,
        "contrast": 0.35,
        "min_area": 0.10,
        "max_area": 0.60,
    }
    ERROR = InvalidParamsError
    OPERATION = "dataset.generate_synthetic"

    def validate(self):
        self._require(0 <= self.val_fraction < 1, "bad val_fraction")
        self._require(0 <= self.test_fraction < 1, "bad test_fraction")
        self._require(self.val_fraction + self.test_fraction < 1,
                      "val_fraction + test_fraction must be < 1")
        self._require(0 < self.radius_min <= self.radius_max < 0.5,
                      "need 0 < radius_min <= radius_max < 0.5")
        self._require(0 <= self.amplitude <= 0.35,
                      "amplitude must be within [0, 0.35]")
        self._require(self.harmonics >= 1, "harmonics must be >= 1")
        self._require(self.noise >= 0, "noise must be >= 0")
        self._require(self.blur >= 0, "blur must be >= 0")
        self._require(0 < self.min_area < self.max_area <= 1,
                      "need 0 < min_area < max_area <= 1")


class TrainConfig(ConfigObject):
    """Run configuration of the trainer.

    warmup_epochs left as None resolves to 20% of the epochs.
    """
    KEYS = {
        "supervision_mode": "eauwseg",
        "annotation_kind": "bpanno",
        "epochs": 40,
        "warmup_epochs": None,
        "batch_size": 16,
        "learning_rate": 1e-4,
        "mu": DEFAULT_MU,
        "use_class_confidence": True,
        "seed": 0,
        "num_threads": 1,
        "prefetch": 2,
    }
    SECTIONS = {
        "weights": LossWeights,
        "caps": Caps,
        "model": ModelConfig,
    }
    OPERATION = "trainer.train"

    def validate(self):
        self._warmup_auto = self.warmup_epochs is None
        if self._warmup_auto:
            self.warmup_epochs = int(0.2 * self.epochs)

        self._require(self.supervision_mode in SUPERVISION_MODES,
                      f"unknown supervision_mode '{self.supervision_mode}'")
        self._require(self.annotation_kind in BOUNDED_KINDS,
                      f"unknown annotation_kind '{self.annotation_kind}'")
        self._require(self.epochs >= 1, "epochs must be >= 1")
        self._require(0 <= self.warmup_epochs < self.epochs,
                      "warmup_epochs must be < epochs")
        self._require(self.batch_size >= 1, "batch_size must be >= 1")
        self._require(self.learning_rate > 0, "learning_rate must be > 0")
        self._require(self.mu > 0, "mu must be > 0")
        self._require(self.num_threads >= 1, "num_threads must be >= 1")
        self._require(self.prefetch >= 0, "prefetch must be >= 0")

    def replace(self, **kwargs):
        # keep an unset warmup following the new epoch count
        if self._warmup_auto and "warmup_epochs" not in kwargs:
            kwargs["warmup_epochs"] = None
        return super(TrainConfig, self).replace(**kwargs)


def _parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except ValueError:
        pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if text.lower() in ("none", "null"):
        return None
    return text


def parse_config_text(text):
    """Parses a flat `key = value` document into a dict.

    Blank lines and lines starting with # are skipped. Values are read as
    JSON literals when possible, otherwise kept as plain strings.
    """
    data = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfigError(f"line {lineno}: expected key = value",
                                     "config.parse")
        key, value = line.split("=", 1)
        data[key.strip()] = _parse_value(value)
    return data


def load_config(path):
    try:
        with open(path) as f:
            return parse_config_text(f.read())
    except OSError as e:
        raise InvalidConfigError(f"cannot read {path}: {e}", "config.load")


def dump_config(config):
    """Renders a ConfigObject (or a flat dict) as `key = value` text."""
    if isinstance(config, ConfigObject):
        config = config.flatten()
    return "".join(f"{key} = {json.dumps(value)}\n"
                   for key, value in sorted(config.items()))


def parse_overrides(overrides):
    """Parses a list of `key=value` strings into a flat dict."""
    data = {}
    for item in overrides or ():
        if "=" not in item:
            raise InvalidConfigError(f"override '{item}' is not key=value",
                                     "cli.run")
        key, value = item.split("=", 1)
        data[key.strip()] = _parse_value(value)
    return data
