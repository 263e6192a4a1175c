"""Static report output: one delimited series and one PNG per hive
measurement, and a size histogram for track logs."""
import csv
import logging
from pathlib import Path

import numpy as np

from .telemetry.store import MEASUREMENTS

logger = logging.getLogger(__name__)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def write_measurement_series(samples, out_dir, plots=True):
    """Write ``<measurement>.csv`` (and ``.png``) for all ten measurements.

    Returns the list of files written.  Samples with no value for a
    measurement (``avg_size_mm`` of a video without sized bees) are skipped
    in that measurement's series.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    plt = _pyplot() if plots else None
    for name, unit in MEASUREMENTS.items():
        points = [(s.timestamp, getattr(s, name)) for s in samples
                  if getattr(s, name) is not None]
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("timestamp", name))
            w.writerows(points)
        written.append(path)
        if plt is not None:
            fig, ax = plt.subplots(figsize=(8, 3))
            if points:
                t, v = zip(*points)
                ax.plot(np.asarray(t, dtype="datetime64[s]"), v, lw=0.8)
            ax.set_title(name)
            ax.set_ylabel(unit)
            fig.autofmt_xdate()
            fig.tight_layout()
            png = out_dir / f"{name}.png"
            fig.savefig(png, dpi=80)
            plt.close(fig)
            written.append(png)
    return written


def write_size_histogram(profiles, out_dir, bins=20, plots=True):
    """Histogram of per-bee sizes (mm) from finalized profiles."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sizes = np.array([p.size_mm for p in profiles if p.size_mm is not None], dtype=float)
    written = []
    path = out_dir / "size_histogram.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin_low_mm", "bin_high_mm", "count"))
        if sizes.size:
            counts, edges = np.histogram(sizes, bins=bins)
            w.writerows(zip(edges[:-1].tolist(), edges[1:].tolist(), counts.tolist()))
    written.append(path)
    if plots:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(6, 3))
        if sizes.size:
            ax.hist(sizes, bins=bins)
        ax.set_xlabel("size (mm)")
        ax.set_ylabel("bees")
        fig.tight_layout()
        png = out_dir / "size_histogram.png"
        fig.savefig(png, dpi=80)
        plt.close(fig)
        written.append(png)
    return written
