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
from .evaluation import MetricsReport, TrimapReport, METRIC_KEYS, TRIMAP_KEYS
from .exceptions import ReportIOError
from .util import write_csv, read_csv

import os
import logging

__all__ = ["emit_report", "plot_trimap", "plot_loss_curves"]

logger = logging.getLogger(LIB_NAME)


def _pyplot():
    """matplotlib.pyplot on the Agg backend, None when not installed."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib is not available, skipping plots")
        return None
    return plt


def _header(rows):
    keys = []
    for row in rows:
        for key in row:
            if key not in keys:
                keys.append(key)
    return keys


def plot_trimap(report, path):
    """Boundary and interior Jaccard of both prediction sets per width.

    Returns:
        path, or None when plotting is unavailable.
    """
    plt = _pyplot()
    if plt is None:
        return None

    widths = report.widths
    fig, ax = plt.subplots(figsize=(6, 4))
    for region, style in (("boundary", "-"), ("interior", "--")):
        for name in ("a", "b"):
            values = [row[f"{region}_jaccard_{name}"] for row in report.rows]
            if all(value is None for value in values):
                continue
            label = report.provenance.get(name, name)
            ax.plot(widths, [float("nan") if v is None else v
                             for v in values],
                    style, marker="o",
                    label=f"{region} {os.path.basename(str(label))}")
    ax.set_xlabel("band width (px)")
    ax.set_ylabel("Jaccard")
    ax.legend(fontsize=7)
    fig.tight_layout()
    try:
        fig.savefig(path)
    except OSError as e:
        raise ReportIOError(f"failed to write {path}: {e}",
                            "evaluation.emit_report")
    finally:
        plt.close(fig)
    return path


def plot_loss_curves(loss_log, path):
    """Per step loss terms of a training run.

    Args:
        loss_log:
            list of loss rows or the path of a loss_log.csv.
    """
    plt = _pyplot()
    if plt is None:
        return None
    if isinstance(loss_log, str):
        loss_log = read_csv(loss_log)

    steps = [row["step"] for row in loss_log]
    fig, ax = plt.subplots(figsize=(6, 4))
    for term in ("total", "l_c", "l_pcl", "l_ce"):
        ax.plot(steps, [row[term] for row in loss_log], label=term)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(path)
    except OSError as e:
        raise ReportIOError(f"failed to write {path}: {e}",
                            "evaluation.emit_report")
    finally:
        plt.close(fig)
    return path


def emit_report(reports, out_dir, plots=True):
    """Writes reports as CSV tables, plus plots where they make sense.

    Args:
        reports:
            dict mapping a table name to a MetricsReport, a TrimapReport or
            a list of row dicts. The name is used as the file stem.
        out_dir:
            directory to write to, created if needed.
        plots:
            False skips every plot.

    Returns:
        list of written paths.

    Raises:
        ReportIOError
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ReportIOError(f"cannot create {out_dir}: {e}",
                            "evaluation.emit_report")

    written = []
    for name, report in reports.items():
        path = os.path.join(out_dir, f"{name}.csv")
        if isinstance(report, MetricsReport):
            rows = report.rows + [dict(report.mean, image_id="mean")]
            write_csv(path, ("image_id",) + METRIC_KEYS, rows)
        elif isinstance(report, TrimapReport):
            write_csv(path, TRIMAP_KEYS, report.rows)
        else:
            rows = list(report)
            write_csv(path, _header(rows), rows)
        written.append(path)

        if plots and isinstance(report, TrimapReport) and report.rows:
            plot = plot_trimap(report, os.path.join(out_dir, f"{name}.png"))
            if plot is not None:
                written.append(plot)

    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written
