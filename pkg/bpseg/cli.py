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

from .const import LIB_NAME, LIB_VER, ANNOTATION_KINDS, SPLITS
from .config import (ConfigObject, GeneratorParams, GeometryParams,
                     TrainConfig, load_config, dump_config, parse_overrides)
from .dataset import DatasetManifest, generate_synthetic, attach_annotations
from .evaluation import (evaluate_checkpoint, trimap_checkpoints,
                         annotation_cost_report)
from .exceptions import BPSegError, InvalidParamsError
from .report import emit_report, plot_loss_curves
from .trainer import train, ablation_suite
from .util import prepare_out_dir, seed_everything

import os
import sys
import logging
import argparse
from logging import StreamHandler

__all__ = ["run", "main", "build_parser"]

logger = logging.getLogger(LIB_NAME)

LOG_FORMAT = ("[%(levelname)s]|%(asctime)s|%(threadName)s|"
              "%(funcName)s|: %(message)s")

_handler = None


def setup_logging(level="INFO"):
    global _handler
    if _handler is None:
        _handler = StreamHandler(sys.stdout)
        _handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(_handler)
    logger.setLevel(level)
    _handler.setLevel(level)


def _int_list(text):
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not a comma "
                                         "separated list of integers")


def _kind_list(text):
    kinds = [item.strip() for item in text.split(",") if item.strip()]
    unknown = [kind for kind in kinds if kind not in ANNOTATION_KINDS]
    if unknown or not kinds:
        raise argparse.ArgumentTypeError(
            f"unknown annotation kinds {unknown}, choose from "
            f"{', '.join(ANNOTATION_KINDS)}"
        )
    return kinds


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="KEY=VALUE",
                        help="override a config key, can be repeated")
    common.add_argument("--force", action="store_true",
                        help="clear a non-empty output directory")
    common.add_argument("--log-level", default="INFO",
                        choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    parser = argparse.ArgumentParser(
        prog=LIB_NAME,
        description="Bounded-polygon weakly supervised segmentation."
    )
    parser.add_argument("--version", action="version",
                        version=f"{LIB_NAME} {LIB_VER}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("gen-data", parents=[common],
                       help="generate the synthetic lesion dataset")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--n", type=int, default=300,
                   help="number of samples (default: %(default)s)")
    p.add_argument("--size", type=int, default=64,
                   help="image side in pixels (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0,
                   help="root seed (default: %(default)s)")

    p = sub.add_parser("gen-anno", parents=[common],
                       help="attach weak annotations to the train split")
    p.add_argument("--manifest", required=True,
                   help="manifest.json or its directory")
    p.add_argument("--kinds", type=_kind_list, default=["bpanno"],
                   help="comma separated annotation kinds "
                        "(default: bpanno)")

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="run directory")

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--out", required=True)

    p = sub.add_parser("trimap", parents=[common],
                       help="boundary / interior comparison of two "
                            "checkpoints")
    p.add_argument("--checkpoint-a", required=True)
    p.add_argument("--checkpoint-b", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--widths", type=_int_list, default=[1, 2, 3, 5, 7, 9],
                   help="comma separated band widths (default: "
                        "1,2,3,5,7,9)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("cost-report", parents=[common],
                       help="annotation click-count proxies")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="train", choices=SPLITS)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablation", parents=[common],
                       help="baseline / +CCL / +CCL+CCG over seeds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2],
                   help="comma separated seeds (default: 0,1,2)")
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--out", required=True)

    return parser


def _resolve(cls, args):
    """Builds a config object from defaults < file < --set overrides."""
    data = load_config(args.config) if args.config else {}
    data.update(parse_overrides(args.overrides))
    return cls(data)


def _write_snapshot(out_dir, config, **extra):
    data = config.flatten() if isinstance(config, ConfigObject) \
        else dict(config)
    data.update(extra)
    path = os.path.join(out_dir, "resolved_config.txt")
    with open(path, "w") as f:
        f.write(dump_config(data))
    return path


def _gen_data(args):
    params = _resolve(GeneratorParams, args)
    prepare_out_dir(args.out, args.force)
    _write_snapshot(args.out, params, n=args.n, size=args.size,
                    seed=args.seed)
    generate_synthetic(args.out, args.n, args.size, args.seed, params)


def _gen_anno(args):
    params = _resolve(GeometryParams, args)
    manifest = DatasetManifest.load(args.manifest)
    attach_annotations(manifest, args.kinds, params)
    _write_snapshot(manifest.path("annotations"), params,
                    kinds=sorted(args.kinds))


def _train(args):
    config = _resolve(TrainConfig, args)
    manifest = DatasetManifest.load(args.manifest)
    prepare_out_dir(args.out, args.force)
    seed_everything(config.seed)
    result = train(manifest, config, args.out)
    plot_loss_curves(result.loss_log,
                     os.path.join(args.out, "loss_curves.png"))


def _eval(args):
    manifest = DatasetManifest.load(args.manifest)
    prepare_out_dir(args.out, args.force)
    _write_snapshot(args.out, {}, checkpoint=args.checkpoint,
                    manifest=args.manifest, split=args.split)
    report = evaluate_checkpoint(args.checkpoint, manifest, args.split)
    emit_report({"metrics": report}, args.out)


def _trimap(args):
    manifest = DatasetManifest.load(args.manifest)
    prepare_out_dir(args.out, args.force)
    _write_snapshot(args.out, {}, checkpoint_a=args.checkpoint_a,
                    checkpoint_b=args.checkpoint_b, manifest=args.manifest,
                    split=args.split, widths=args.widths)
    report = trimap_checkpoints(args.checkpoint_a, args.checkpoint_b,
                                manifest, args.split, args.widths)
    emit_report({"trimap": report}, args.out)


def _cost_report(args):
    manifest = DatasetManifest.load(args.manifest)
    prepare_out_dir(args.out, args.force)
    _write_snapshot(args.out, {}, manifest=args.manifest, split=args.split)
    rows = annotation_cost_report(manifest, args.split)
    if not rows:
        raise InvalidParamsError(f"no annotation on split '{args.split}'",
                                 "evaluation.annotation_cost_report")
    emit_report({"cost": rows}, args.out)


def _ablation(args):
    config = _resolve(TrainConfig, args)
    manifest = DatasetManifest.load(args.manifest)
    prepare_out_dir(args.out, args.force)
    _write_snapshot(args.out, config, seeds=args.seeds, split=args.split)
    rows, summary = ablation_suite(manifest, config, args.out, args.seeds,
                                   args.split)
    emit_report({"ablation": rows, "ablation_summary": summary}, args.out)


COMMANDS = {
    "gen-data": _gen_data,
    "gen-anno": _gen_anno,
    "train": _train,
    "eval": _eval,
    "trimap": _trimap,
    "cost-report": _cost_report,
    "ablation": _ablation,
}


def run(argv=None):
    """Runs one subcommand.

    Returns:
        0 on success, 1 when an operation failed, 2 on usage errors.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code

    setup_logging(args.log_level)
    try:
        COMMANDS[args.command](args)
    except BPSegError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"{LIB_NAME} {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run(sys.argv[1:]))
