"""Per-frame error reports, window-length sweeps and error distributions.

Sequences are scored with stride-1 sliding windows; each frame takes its
prediction from the window in which it sits closest to the centre (ties go
to the earlier window), so every frame is scored exactly once at every
window length.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .pose import Pose7, pack, rotation_error_deg, translation_error, unpack
from .training import predict_raw, raw_to_poses

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("frame", "translation_error_m", "rotation_error_deg")
SUMMARY_COLUMNS = ("metric", "median", "mean", "max", "count")
SWEEP_COLUMNS = ("window_length", "median_translation_error_m")
CDF_COLUMNS = ("error", "fraction")
HIST_COLUMNS = ("bin_start", "bin_end", "count")


@dataclass
class ErrorReport:
    translation: np.ndarray
    rotation: np.ndarray
    frames: np.ndarray = None

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        if self.frames is None:
            self.frames = np.arange(len(self.translation))

    @property
    def count(self):
        return len(self.translation)

    def summary(self):
        out = {}
        for name, errs in (("translation_m", self.translation), ("rotation_deg", self.rotation)):
            out[name] = {"median": float(np.median(errs)), "mean": float(np.mean(errs)),
                         "max": float(np.max(errs)), "count": len(errs)}
        return out

    @property
    def median_translation(self):
        return float(np.median(self.translation))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for f, t, r in zip(self.frames, self.translation, self.rotation):
                w.writerow([int(f), f"{t:.17g}", f"{r:.17g}"])

    def write_summary_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for name, s in self.summary().items():
                w.writerow([name, f"{s['median']:.17g}", f"{s['mean']:.17g}", f"{s['max']:.17g}", s["count"]])


def _as_poses(traj):
    if isinstance(traj, np.ndarray):
        return [unpack(y) for y in traj.reshape(-1, 7)]
    return [p if isinstance(p, Pose7) else unpack(p) for p in traj]


def evaluate(pred, gt, frames=None):
    pred, gt = _as_poses(pred), _as_poses(gt)
    if len(pred) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(pred)} predicted vs {len(gt)} ground truth")
    if not pred:
        raise ValueError("cannot evaluate an empty trajectory")
    return ErrorReport([translation_error(p, g) for p, g in zip(pred, gt)],
                       [rotation_error_deg(p, g) for p, g in zip(pred, gt)], frames)


def central_window_starts(n, window):
    """Start index of the window scoring each of ``n`` frames."""
    if window > n:
        raise ValueError(f"window {window} longer than sequence of {n} frames")
    return np.clip(np.arange(n) - window // 2, 0, n - window)


def predict_sequence_raw(model, features, window, chunk=256):
    """Raw outputs (N, W) for every frame using centre-scored stride-1 windows."""
    features = np.asarray(features, dtype=np.float64)
    n = len(features)
    starts = central_window_starts(n, window)
    windows = sliding_window_view(features, window, axis=0).transpose(0, 2, 1)
    needed = np.unique(starts)
    out = np.empty((n, model.config.output_width))
    for k in range(0, len(needed), chunk):
        block = needed[k:k + chunk]
        raw = predict_raw(model, windows[block])
        for j, s in enumerate(block):
            sel = np.flatnonzero(starts == s)
            out[sel] = raw[j, sel - s]
    return out


def predict_sequence(model, features, window):
    """Point-estimate pose 7-vectors (N, 7) for a whole sequence."""
    poses, _ = raw_to_poses(model, predict_sequence_raw(model, features, window))
    return np.stack([pack(p) for p in poses])


@dataclass
class SweepResult:
    lengths: list = field(default_factory=list)
    median_errors: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def rows(self):
        return list(zip(self.lengths, self.median_errors))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for length, err in self.rows():
                w.writerow([length, f"{err:.17g}"])


def sweep_window_lengths(model, dataset, lengths):
    """Median test translation error at each inference window length."""
    lengths = [int(v) for v in lengths]
    if len(set(lengths)) != len(lengths):
        raise ValueError(f"duplicate window lengths in {lengths}")
    if any(v < 1 for v in lengths):
        raise ValueError("window lengths must be >= 1")
    seqs = dataset.split("test").sequences or dataset.sequences
    result = SweepResult()
    for length in sorted(lengths):
        errs = []
        for seq in seqs:
            if length > len(seq):
                log.warning("window %d exceeds sequence %s (%d frames); skipped", length, seq.name, len(seq))
                continue
            pred = predict_sequence(model, seq.features, length)
            errs.append(np.linalg.norm(pred[:, :3] - seq.poses[:, :3], axis=1))
        if not errs:
            result.skipped.append(length)
            continue
        result.lengths.append(length)
        result.median_errors.append(float(np.median(np.concatenate(errs))))
    return result


def error_distribution(report, bin_width, which="translation"):
    """Empirical CDF and fixed-width histogram of one error column.

    Returns ``((errors, fractions), (bin_edges, counts))``.
    """
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    errs = np.sort(report.translation if which == "translation" else report.rotation)
    fractions = np.arange(1, len(errs) + 1) / len(errs)
    nbins = int(np.floor(errs[-1] / bin_width)) + 1 if len(errs) else 0
    idx = np.minimum((errs // bin_width).astype(int), nbins - 1)
    counts = np.bincount(idx, minlength=nbins)
    edges = np.arange(nbins + 1) * bin_width
    return (errs, fractions), (edges, counts)


def write_distribution_csv(cdf, hist, cdf_path, hist_path):
    errs, fractions = cdf
    edges, counts = hist
    with open(cdf_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CDF_COLUMNS)
        for e, f in zip(errs, fractions):
            w.writerow([f"{e:.17g}", f"{f:.17g}"])
    with open(hist_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HIST_COLUMNS)
        for k, c in enumerate(counts):
            w.writerow([f"{edges[k]:.17g}", f"{edges[k + 1]:.17g}", int(c)])


def write_all(report, out_dir, bin_width=0.1):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "report.csv")
    report.write_summary_csv(out / "summary.csv")
    cdf, hist = error_distribution(report, bin_width)
    write_distribution_csv(cdf, hist, out / "cdf.csv", out / "hist.csv")
