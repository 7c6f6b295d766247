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

from .const import LIB_NAME, CHECKPOINT_VERSION
from .config import ModelConfig
from .exceptions import (ShapeMismatchError, InvalidConfigError,
                         MissingFileError)

import os
import logging
from collections import namedtuple

import torch
import torch.nn as nn
import torch.nn.functional as F

__all__ = ["ModelOutputs", "BPSegNet", "build_model", "count_parameters",
           "save_checkpoint", "load_checkpoint"]

logger = logging.getLogger(LIB_NAME)

ModelOutputs = namedtuple("ModelOutputs", ("seg_prob", "cls_prob", "embed"))


class ConvBlock(nn.Sequential):
    """Two 3×3 convolutions, each followed by BatchNorm and ReLU."""
    def __init__(self, in_channels, out_channels):
        super(ConvBlock, self).__init__(
            nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
        )


class BPSegNet(nn.Module):
    """U-shaped encoder-decoder with three heads on the shared decoder
    feature.

    The segmentation head predicts 2 classes and p is the softmax foreground
    channel, the classification head predicts OUTSIDE/BAND/INSIDE and the
    embedding head projects to L2-normalized pixel embeddings. Only the
    segmentation head is needed at inference, see predict.

    Attributes:
        config:
            ModelConfig the network was built from.
        encoders:
            ModuleList of ConvBlock, one per resolution.
        bottleneck:
            ConvBlock at the lowest resolution.
        upsamplers:
            ModuleList of transposed convolutions, deepest first.
        decoders:
            ModuleList of ConvBlock merging upsampled and skip features.
    """
    def __init__(self, config):
        super(BPSegNet, self).__init__()
        self.config = config
        widths = [config.base_channels * 2 ** i for i in range(config.depth)]

        self.encoders = nn.ModuleList()
        in_ch = config.in_channels
        for width in widths:
            self.encoders.append(ConvBlock(in_ch, width))
            in_ch = width

        self.bottleneck = ConvBlock(widths[-1], widths[-1])

        self.upsamplers = nn.ModuleList()
        self.decoders = nn.ModuleList()
        in_ch = widths[-1]
        for width in reversed(widths):
            self.upsamplers.append(
                nn.ConvTranspose2d(in_ch, width, 2, stride=2))
            self.decoders.append(ConvBlock(2 * width, width))
            in_ch = width

        self.seg_head = nn.Conv2d(widths[0], 2, 1)
        self.cls_head = nn.Conv2d(widths[0], 3, 1)
        self.embed_head = nn.Conv2d(widths[0], config.embed_dim, 1)

    def _check_input(self, images):
        if images.dim() != 4 or images.shape[1] != self.config.in_channels:
            raise ShapeMismatchError(
                f"expected (B, {self.config.in_channels}, H, W) images, got "
                f"{tuple(images.shape)}", "model.forward"
            )
        factor = 2 ** self.config.depth
        if images.shape[2] % factor or images.shape[3] % factor:
            raise ShapeMismatchError(
                f"H and W must be divisible by {factor}, got "
                f"{tuple(images.shape[2:])}", "model.forward"
            )

    def features(self, images):
        """Decoder feature f_S(x) shared by all heads."""
        self._check_input(images)
        skips = []
        x = images
        for encoder in self.encoders:
            x = encoder(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)

        x = self.bottleneck(x)

        for upsampler, decoder, skip in zip(self.upsamplers, self.decoders,
                                            reversed(skips)):
            x = decoder(torch.cat([upsampler(x), skip], dim=1))
        return x

    def forward(self, images):
        feature = self.features(images)
        seg_prob = F.softmax(self.seg_head(feature), dim=1)[:, 1]
        cls_prob = F.softmax(self.cls_head(feature), dim=1)
        embed = F.normalize(self.embed_head(feature), dim=1)
        return ModelOutputs(seg_prob, cls_prob, embed)

    def predict(self, images):
        """Foreground probability only, the auxiliary heads are skipped."""
        feature = self.features(images)
        return F.softmax(self.seg_head(feature), dim=1)[:, 1]


def count_parameters(model):
    return sum(p.numel() for p in model.parameters())


def build_model(config=None):
    """Builds a BPSegNet with parameters initialized from config.seed.

    The global torch RNG is left untouched.

    Raises:
        InvalidConfigError
    """
    if not isinstance(config, ModelConfig):
        config = ModelConfig(config)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = BPSegNet(config)

    logger.info(f"Built BPSegNet with {count_parameters(model)} parameters "
                f"(base {config.base_channels}, depth {config.depth}, "
                f"embed {config.embed_dim})")
    return model


def save_checkpoint(path, model, train_config=None, extra=None):
    """Writes parameters, configs and the torch RNG state to one file.

    Layout (version CHECKPOINT_VERSION):
        version, model_config (dict), state_dict, train_config (flat dict or
        None), rng_state (ByteTensor), extra (dict of plain values).
    """
    payload = {
        "version": CHECKPOINT_VERSION,
        "model_config": model.config.to_dict(),
        "state_dict": model.state_dict(),
        "train_config": train_config.flatten()
        if train_config is not None else None,
        "rng_state": torch.get_rng_state(),
        "extra": dict(extra or {}),
    }
    torch.save(payload, path)
    logger.debug(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path):
    """Loads a checkpoint written by save_checkpoint.

    Returns:
        A tuple of (model in eval mode, payload dict).

    Raises:
        MissingFileError, InvalidConfigError
    """
    if not os.path.isfile(path):
        raise MissingFileError(f"checkpoint {path} does not exist",
                               "model.load_checkpoint", path)
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise InvalidConfigError(
            f"checkpoint version {version} is not supported "
            f"(expected {CHECKPOINT_VERSION})", "model.load_checkpoint"
        )

    model = BPSegNet(ModelConfig(payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload
