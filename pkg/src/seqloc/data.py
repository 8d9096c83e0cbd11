"""Datasets of posed frame sequences and the file formats they come from.

Two on-disk layouts are understood:

* 7-Scenes: ``<root>/seq-XX/frame-NNNNNN.pose.txt`` holding a 4x4 row-major
  camera-to-world matrix, plus optional ``frame-NNNNNN.features.txt`` with a
  whitespace-separated feature vector. ``TrainSplit.txt`` / ``TestSplit.txt``
  list ``sequenceN`` entries.
* Trajectory CSV: one sequence per file with columns
  ``frame,tx,ty,tz,qw,qx,qy,qz`` and optionally ``f0..f{D-1}``. Files whose
  name starts with ``test`` are labelled test, everything else train.
"""

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import make_rng
from .pose import Pose7, canonical_quaternion, check_pose_matrix, matrix_to_pose, quaternion_from_euler, unpack

log = logging.getLogger(__name__)

POSE_COLUMNS = ("frame", "tx", "ty", "tz", "qw", "qx", "qy", "qz")
_FRAME_RE = re.compile(r"^frame-(\d+)\.(.+)$")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class FrameRecord:
    index: int
    pose: Pose7
    features: np.ndarray = None
    timestamp: float = None


@dataclass
class Sequence:
    name: str
    frames: np.ndarray
    poses: np.ndarray
    features: np.ndarray = None
    split: str = "train"
    timestamps: np.ndarray = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.poses = np.asarray(self.poses, dtype=np.float64).reshape(-1, 7)
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.ndim != 2 or len(self.features) != len(self.frames):
                raise DatasetError(f"{self.name}: features must be (N, D) with N = {len(self.frames)}")
        if len(self.poses) != len(self.frames):
            raise DatasetError(f"{self.name}: {len(self.frames)} frames but {len(self.poses)} poses")
        if len(self.frames) > 1 and np.any(np.diff(self.frames) <= 0):
            raise DatasetError(f"{self.name}: frame indices must be strictly increasing")

    def __len__(self):
        return len(self.frames)

    def records(self):
        for k in range(len(self)):
            yield FrameRecord(int(self.frames[k]), unpack(self.poses[k]),
                              None if self.features is None else self.features[k],
                              None if self.timestamps is None else float(self.timestamps[k]))


def clip_count(length, window, stride):
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be positive")
    return (length - window) // stride + 1 if length >= window else 0


@dataclass
class ClipDataset:
    sequences: list
    window: int = 20
    stride: int = None
    warnings: list = field(default_factory=list)

    def split(self, name):
        return ClipDataset([s for s in self.sequences if s.split == name], self.window, self.stride)

    @property
    def feature_dim(self):
        dims = {s.features.shape[1] for s in self.sequences if s.features is not None}
        if len(dims) != 1:
            raise DatasetError(f"sequences carry inconsistent or missing features (dims {sorted(dims)})")
        return dims.pop()

    def num_frames(self):
        return sum(len(s) for s in self.sequences)

    def clips(self, window=None, stride=None):
        """All windows as ``(features (B, T, D), poses (B, T, 7))``; never crosses sequences."""
        window = window or self.window
        stride = stride or self.stride or window
        xs, ys = [], []
        for seq in self.sequences:
            if seq.features is None:
                raise DatasetError(f"sequence {seq.name} has no features")
            for k in range(clip_count(len(seq), window, stride)):
                sl = slice(k * stride, k * stride + window)
                xs.append(seq.features[sl])
                ys.append(seq.poses[sl])
        if not xs:
            return np.zeros((0, window, 0)), np.zeros((0, window, 7))
        return np.stack(xs), np.stack(ys)


# --- 7-Scenes -----------------------------------------------------------------

def parse_7scenes_pose(text, source="<text>"):
    rows = [line.split() for line in text.strip().splitlines() if line.strip()]
    if len(rows) != 4:
        raise DatasetError(f"{source}: expected 4 rows, found {len(rows)}")
    m = np.empty((4, 4))
    for r, row in enumerate(rows):
        if len(row) != 4:
            raise DatasetError(f"{source}: row {r} has {len(row)} values, expected 4")
        for c, tok in enumerate(row):
            try:
                m[r, c] = float(tok)
            except ValueError:
                raise DatasetError(f"{source}: row {r}, column {c}: cannot parse {tok!r}") from None
    try:
        check_pose_matrix(m)
    except ValueError as e:
        raise DatasetError(f"{source}: {e}") from None
    return m


def format_7scenes_pose(m):
    return "".join(" ".join(f"{v:.17g}" for v in row) + "\n" for row in np.asarray(m))


def _read_split_file(path):
    if not path.exists():
        return None
    names = set()
    for line in path.read_text().split():
        m = re.match(r"sequence(\d+)$", line.strip())
        if m:
            names.add(f"seq-{int(m.group(1)):02d}")
    return names


def _load_7scenes_sequence(seq_dir, split):
    groups = {}
    for p in seq_dir.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            groups.setdefault(int(m.group(1)), {})[m.group(2)] = p
    if not groups:
        return None
    indices = sorted(groups)
    missing = [f"frame-{i:06d}" for i in indices if "pose.txt" not in groups[i]]
    if missing:
        raise DatasetError(f"{seq_dir}: missing pose for frames {', '.join(missing)}")
    poses, feats = [], []
    for i in indices:
        path = groups[i]["pose.txt"]
        pose = matrix_to_pose(parse_7scenes_pose(path.read_text(), str(path)))
        poses.append(np.concatenate([pose.translation, pose.quaternion]))
        if "features.txt" in groups[i]:
            fpath = groups[i]["features.txt"]
            try:
                feats.append(np.array(fpath.read_text().split(), dtype=np.float64))
            except ValueError:
                raise DatasetError(f"{fpath}: features must be whitespace-separated numbers") from None
    if feats and len(feats) != len(indices):
        raise DatasetError(f"{seq_dir}: features present for only {len(feats)} of {len(indices)} frames")
    return Sequence(seq_dir.name, indices, poses, np.stack(feats) if feats else None, split)


def _load_7scenes(root):
    train = _read_split_file(root / "TrainSplit.txt")
    test = _read_split_file(root / "TestSplit.txt")
    seqs = []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        split = "test" if test and d.name in test else "train"
        if train is not None and test is not None and d.name not in train | test:
            continue
        seq = _load_7scenes_sequence(d, split)
        if seq is not None:
            seqs.append(seq)
    return seqs


# --- trajectory CSV -------------------------------------------------------------

@dataclass
class LoadReport:
    path: str
    frames: int = 0
    normalized_quaternions: int = 0


def write_trajectory_csv(path, seq):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = 0 if seq.features is None else seq.features.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(POSE_COLUMNS) + [f"f{k}" for k in range(d)])
        for k in range(len(seq)):
            vals = list(seq.poses[k]) + ([] if d == 0 else list(seq.features[k]))
            w.writerow([int(seq.frames[k])] + [f"{v:.17g}" for v in vals])


def read_trajectory_csv(path, split=None):
    """Read one sequence. Returns ``(Sequence, LoadReport)``."""
    path = Path(path)
    report = LoadReport(str(path))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    for k, col in enumerate(POSE_COLUMNS):
        if col not in header:
            raise DatasetError(f"{path}: missing column {col!r}")
        if header[k] != col:
            raise DatasetError(f"{path}: column {k} is {header[k]!r}, expected {col!r}")
    feat_cols = header[len(POSE_COLUMNS):]
    if feat_cols != [f"f{k}" for k in range(len(feat_cols))]:
        raise DatasetError(f"{path}: feature columns must be f0..f{len(feat_cols) - 1}, got {feat_cols}")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64).reshape(-1, len(header))
    frames = data[:, 0].astype(np.int64)
    poses = data[:, 1:8].copy()
    norms = np.linalg.norm(poses[:, 3:], axis=1)
    if np.any(norms == 0):
        bad = frames[norms == 0].tolist()
        raise DatasetError(f"{path}: zero quaternion at frames {bad}")
    off = np.abs(norms - 1.0) > 1e-9
    report.normalized_quaternions = int(off.sum())
    if off.any():
        log.warning("%s: normalized %d non-unit quaternions", path, off.sum())
        poses[off, 3:] /= norms[off, None]
    report.frames = len(frames)
    split = split or ("test" if path.name.lower().startswith("test") else "train")
    feats = data[:, 8:].copy() if feat_cols else None
    return Sequence(path.stem, frames, poses, feats, split), report


def load_dataset(root, split="all", window=20, stride=None):
    """Load a 7-Scenes directory, a directory of trajectory CSVs, or one CSV file."""
    root = Path(root)
    if not root.exists():
        raise DatasetError(f"dataset path does not exist: {root}")
    warnings = []
    if root.is_file():
        seq, rep = read_trajectory_csv(root)
        seqs, reports = [seq], [rep]
    else:
        csvs = sorted(root.glob("*.csv"))
        reports = []
        if csvs:
            seqs = []
            for p in csvs:
                seq, rep = read_trajectory_csv(p)
                seqs.append(seq)
                reports.append(rep)
        else:
            seqs = _load_7scenes(root)
    for rep in reports:
        if rep.normalized_quaternions:
            warnings.append(f"{rep.path}: normalized {rep.normalized_quaternions} quaternions")
    if not seqs:
        raise DatasetError(f"no sequences found under {root}")
    if split != "all":
        seqs = [s for s in seqs if s.split == split]
        if not seqs:
            raise DatasetError(f"no {split!r} sequences under {root}")
    return ClipDataset(seqs, window, stride, warnings)


# --- synthetic scenes -------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSceneConfig:
    """A periodic Lissajous camera path observed through a fixed random map.

    The train sequence samples the path at integer frames; the test sequence
    samples it again, shifted by ``test_offset`` frames. ``aliases`` are
    ``(source, target)`` frame-index pairs applied within each sequence:
    the target frame emits the source frame's noiseless observation.
    """

    amplitudes: tuple = (2.0, 1.5, 0.5)
    frequencies: tuple = (1, 2, 3)
    phases: tuple = (0.0, 1.5707963267948966, 0.7853981633974483)
    rot_amplitudes_deg: tuple = (10.0, 15.0, 45.0)
    rot_frequencies: tuple = (2, 1, 1)
    rot_phases: tuple = (0.3, 0.0, 1.0)
    period: int = 200
    n_train: int = 400
    n_test: int = 200
    test_offset: float = 0.5
    feature_dim: int = 16
    n_frequencies: int = 16
    frequency_scale: float = 1.0
    noise: float = 0.3
    aliases: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.feature_dim < 1 or self.n_frequencies < 1:
            raise ValueError("feature_dim and n_frequencies must be at least 1")
        if self.n_train < 1 or self.period <= 0:
            raise ValueError("n_train and period must be positive")
        object.__setattr__(self, "aliases", tuple(tuple(int(v) for v in a) for a in self.aliases))
        limit = max(self.n_train, self.n_test)
        for a in self.aliases:
            if len(a) != 2 or min(a) < 0 or max(a) >= limit:
                raise ValueError(f"alias pair {a} out of range for sequences of length <= {limit}")


def synth_poses(config, u):
    """Pose 7-vectors at (possibly fractional) path parameters ``u`` in frames."""
    tau = 2.0 * np.pi * np.asarray(u, dtype=np.float64) / config.period
    trans = np.stack([a * np.sin(f * tau + p) for a, f, p in
                      zip(config.amplitudes, config.frequencies, config.phases)], axis=1)
    ang = [np.radians(a) * np.sin(f * tau + p) for a, f, p in
           zip(config.rot_amplitudes_deg, config.rot_frequencies, config.rot_phases)]
    quats = np.stack([canonical_quaternion(quaternion_from_euler(r, p, y)) for r, p, y in zip(*ang)])
    return np.concatenate([trans, quats], axis=1)


class ObservationMap:
    """x = P [sin(F p + b), cos(F p + b)] for a pose 7-vector p."""

    def __init__(self, config, rng):
        k = config.n_frequencies
        self.freqs = rng.normal(0.0, config.frequency_scale, size=(k, 7))
        self.offsets = rng.uniform(0.0, 2.0 * np.pi, size=k)
        self.proj = rng.normal(0.0, 1.0 / np.sqrt(k), size=(config.feature_dim, 2 * k))

    def __call__(self, poses):
        z = poses @ self.freqs.T + self.offsets
        return np.concatenate([np.sin(z), np.cos(z)], axis=-1) @ self.proj.T


def synth_generate(config):
    root = np.random.SeedSequence(config.seed)
    map_seed, train_seed, test_seed = root.spawn(3)
    obs = ObservationMap(config, make_rng(map_seed.generate_state(1)[0]))
    specs = [("synth-train", np.arange(config.n_train, dtype=np.float64), "train", train_seed)]
    if config.n_test > 0:
        specs.append(("synth-test", np.arange(config.n_test) + config.test_offset, "test", test_seed))
    seqs = []
    for name, u, split, seed in specs:
        poses = synth_poses(config, u)
        clean = obs(poses)
        source = clean.copy()
        for a, b in config.aliases:
            if a < len(u) and b < len(u):
                clean[b] = source[a]
        noise = make_rng(seed.generate_state(1)[0]).normal(0.0, 1.0, size=clean.shape)
        feats = clean + config.noise * noise
        seqs.append(Sequence(name, np.arange(len(u)), poses, feats, split))
    return ClipDataset(seqs)
