"""Least-squares spline smoothing of independent per-frame pose estimates."""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_lsq_spline

from .evaluation import evaluate
from .pose import pack, unpack


@dataclass(frozen=True)
class SplineConfig:
    degree: int = 3
    knot_spacing: int = 10

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f"spline degree must be >= 1, got {self.degree}")
        if self.knot_spacing < self.degree + 1:
            raise ValueError(f"knot spacing {self.knot_spacing} must be >= degree + 1 = {self.degree + 1}")


def knot_vector(n, config):
    """Clamped uniform knots over frame indices 0..n-1; segments span >= knot_spacing frames."""
    k = config.degree
    segments = max(1, (n - 1) // config.knot_spacing)
    interior = np.linspace(0.0, n - 1.0, segments + 1)
    return np.concatenate([[0.0] * k, interior, [n - 1.0] * k])


def sign_align_sequence(quats):
    """Flip quaternions so consecutive ones have non-negative inner product."""
    q = np.array(quats, dtype=np.float64)
    for t in range(1, len(q)):
        if np.dot(q[t], q[t - 1]) < 0:
            q[t] = -q[t]
    return q


def smooth_array(traj, config=SplineConfig()):
    traj = np.asarray(traj, dtype=np.float64)
    n = len(traj)
    if traj.ndim != 2 or traj.shape[1] != 7:
        raise ValueError(f"trajectory must be (N, 7), got {traj.shape}")
    if n < config.degree + 1:
        raise ValueError(f"need at least {config.degree + 1} poses to fit a degree-{config.degree} spline, got {n}")
    x = np.arange(n, dtype=np.float64)
    data = traj.copy()
    data[:, 3:] = sign_align_sequence(data[:, 3:])
    spline = make_lsq_spline(x, data, knot_vector(n, config), k=config.degree)
    out = spline(x)
    return np.stack([pack(unpack(row)) for row in out])


def spline_smooth(poses, config=SplineConfig()):
    """Smooth a trajectory given as a list of ``Pose7`` or an (N, 7) array.

    Returns the same kind it was given, with unit canonical quaternions.
    """
    if isinstance(poses, np.ndarray):
        return smooth_array(poses, config)
    out = smooth_array(np.stack([pack(p) for p in poses]) if poses else np.zeros((0, 7)), config)
    return [unpack(row) for row in out]


def baseline_pipeline(estimates, gt, config=SplineConfig()):
    """Smooth per-frame estimates and score raw and smoothed against ``gt``.

    Returns ``(smoothed, raw_report, smoothed_report)``.
    """
    smoothed = spline_smooth(estimates, config)
    return smoothed, evaluate(estimates, gt), evaluate(smoothed, gt)

