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

import math

LIB_NAME = "bpseg"
LIB_VER = "a20241018"

MANIFEST_VERSION = 1
CHECKPOINT_VERSION = 1

# Region labels of a RegionPartition; they double as the 3-class labels y^c.
OUTSIDE = 0
BAND = 1
INSIDE = 2

IGNORE = 255

ANNOTATION_KINDS = ("bpanno", "scribble", "box", "rectangle", "mask",
                    "bprect", "bpellipse")
BOUNDED_KINDS = ("bpanno", "bprect", "bpellipse")

SUPERVISION_MODES = ("full_mask", "bpanno_baseline", "eauwseg",
                     "scribble_pce", "box", "rectangle", "envelope_only")

SPLITS = ("train", "val", "test")

DEFAULT_RADIUS = 3
DEFAULT_EPSILON = 2.0
DEFAULT_VERTEX_CAP = 32
DEFAULT_MU = 0.7 * math.log(2)
DEFAULT_TRIMAP_WIDTHS = (1, 2, 3, 5, 7, 9)
