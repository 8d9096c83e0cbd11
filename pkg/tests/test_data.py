import os
import shutil

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqloc.data import (ClipDataset, DatasetError, Sequence, SyntheticSceneConfig, clip_count,
                         format_7scenes_pose, load_dataset, parse_7scenes_pose, read_trajectory_csv,
                         synth_generate, write_trajectory_csv)
from seqloc.pose import Pose7, matrix_to_pose, pose_to_matrix, quaternion_to_rotation

from conftest import random_quaternion

# A pose file in the dataset's own text style: 8-digit scientific notation, tab separated, trailing blanks.
SAMPLE_POSE = (
    "9.1481259e-001\t-1.4531970e-001\t3.7682902e-001\t-1.6372898e-001\t\n"
    "4.9108038e-002\t9.6612548e-001\t2.5335739e-001\t-5.3658575e-001\t\n"
    "-4.0088194e-001\t-2.1326919e-001\t8.9096011e-001\t1.4291549e-002\t\n"
    "0.0000000e+000\t0.0000000e+000\t0.0000000e+000\t1.0000000e+000\t\n"
)


def make_7scenes(root, n_seq=2, n_frames=6, dim=3, seed=0):
    r = np.random.default_rng(seed)
    truth = {}
    for s in range(1, n_seq + 1):
        d = root / f"seq-{s:02d}"
        d.mkdir(parents=True)
        poses = []
        for i in range(n_frames):
            p = Pose7(r.normal(size=3), random_quaternion(r)).canonicalize()
            (d / f"frame-{i:06d}.pose.txt").write_text(format_7scenes_pose(pose_to_matrix(p)))
            (d / f"frame-{i:06d}.features.txt").write_text(" ".join(f"{v:.17g}" for v in r.normal(size=dim)))
            poses.append(p)
        truth[d.name] = poses
    (root / "TrainSplit.txt").write_text("sequence1\n")
    (root / "TestSplit.txt").write_text("sequence2\n")
    return truth


def test_parse_identity_and_reflection():
    ident = "1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n"
    assert matrix_to_pose(parse_7scenes_pose(ident)) == Pose7.identity()
    refl = "-1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n"
    with pytest.raises(DatasetError):
        parse_7scenes_pose(refl)
    with pytest.raises(DatasetError, match="row 1"):
        parse_7scenes_pose("1 0 0 0\n0 1 0\n0 0 1 0\n0 0 0 1\n")
    with pytest.raises(DatasetError, match="cannot parse"):
        parse_7scenes_pose("1 0 0 x\n0 1 0 0\n0 0 1 0\n0 0 0 1\n")


def test_sample_pose_file_round_trips():
    m = parse_7scenes_pose(SAMPLE_POSE)
    assert np.max(np.abs(pose_to_matrix(matrix_to_pose(m)) - m)) < 1e-6


@given(st.integers(0, 2**32 - 1))
def test_pose_file_text_round_trip(seed):
    r = np.random.default_rng(seed)
    m = np.eye(4)
    m[:3, :3] = quaternion_to_rotation(random_quaternion(r))
    m[:3, 3] = r.normal(size=3) * 5
    parsed = parse_7scenes_pose(format_7scenes_pose(m))
    assert np.array_equal(parsed, m)
    assert np.array_equal(parse_7scenes_pose(format_7scenes_pose(parsed)), parsed)


def test_7scenes_directory(tmp_path):
    truth = make_7scenes(tmp_path)
    ds = load_dataset(tmp_path)
    assert [s.name for s in ds.sequences] == ["seq-01", "seq-02"]
    assert [s.split for s in ds.sequences] == ["train", "test"]
    for seq in ds.sequences:
        for rec, p in zip(seq.records(), truth[seq.name]):
            assert np.max(np.abs(rec.pose.translation - p.translation)) < 1e-12
            assert np.max(np.abs(rec.pose.quaternion - p.quaternion)) < 1e-6
    assert load_dataset(tmp_path, split="test").sequences[0].name == "seq-02"


def test_7scenes_listing_order_does_not_matter(tmp_path):
    make_7scenes(tmp_path / "a", seed=3)
    # Same files, created in reverse order in a second tree.
    src = tmp_path / "a"
    dst = tmp_path / "b"
    for path in sorted(src.rglob("*"), reverse=True):
        target = dst / path.relative_to(src)
        if path.is_file():
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copy(path, target)
    a, b = load_dataset(src), load_dataset(dst)
    for s, t in zip(a.sequences, b.sequences):
        assert np.array_equal(s.poses, t.poses) and np.array_equal(s.features, t.features)
        assert np.array_equal(s.frames, np.arange(6))


def test_missing_pose_is_reported(tmp_path):
    make_7scenes(tmp_path)
    os.remove(tmp_path / "seq-01" / "frame-000003.pose.txt")
    with pytest.raises(DatasetError, match="frame-000003"):
        load_dataset(tmp_path)


def test_empty_and_missing_directories(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)
    with pytest.raises(DatasetError, match="nowhere"):
        load_dataset(tmp_path / "nowhere")


def test_windowing_arithmetic():
    r = np.random.default_rng(0)
    seqs = [Sequence(f"s{k}", range(50), np.tile([0, 0, 0, 1, 0, 0, 0.0], (50, 1)), r.normal(size=(50, 2)))
            for k in range(2)]
    x, y = ClipDataset(seqs).clips(20, 20)
    assert x.shape == (4, 20, 2) and y.shape == (4, 20, 7)
    assert np.array_equal(x[2], seqs[1].features[:20])


@given(st.integers(0, 60), st.integers(1, 25), st.integers(1, 25))
def test_clip_count_formula(length, window, stride):
    expected = (length - window) // stride + 1 if length >= window else 0
    assert clip_count(length, window, stride) == expected
    seq = Sequence("s", range(length), np.tile([0, 0, 0, 1, 0, 0, 0.0], (length, 1)),
                   np.arange(length, dtype=float)[:, None])
    x, _ = ClipDataset([seq]).clips(window, stride)
    assert len(x) == expected
    # Windows never cross sequence boundaries and are contiguous.
    for k, clip in enumerate(x):
        assert np.array_equal(clip[:, 0], np.arange(k * stride, k * stride + window))


def test_synthetic_generation():
    cfg = SyntheticSceneConfig(noise=0.0, n_train=300, n_test=0, aliases=((10, 200),))
    ds = synth_generate(cfg)
    seq = ds.sequences[0]
    assert np.array_equal(seq.features[10], seq.features[200])
    assert np.linalg.norm(seq.poses[10, :3] - seq.poses[200, :3]) > 0.1
    # Frames one period apart share the pose, and so the observation.
    assert np.allclose(seq.poses[5], seq.poses[205], atol=1e-12)
    assert np.allclose(seq.features[5], seq.features[205], atol=1e-12)
    again = synth_generate(cfg)
    assert np.array_equal(again.sequences[0].features, seq.features)
    noisy = synth_generate(SyntheticSceneConfig(aliases=((10, 150),)))
    diff = noisy.sequences[0].features[10] - noisy.sequences[0].features[150]
    assert np.any(diff != 0)  # independent noise on top of identical clean observations
    assert np.allclose(np.linalg.norm(seq.poses[:, 3:], axis=1), 1.0)


def test_synthetic_config_validation():
    with pytest.raises(ValueError):
        SyntheticSceneConfig(aliases=((10, 1000),))
    with pytest.raises(ValueError):
        SyntheticSceneConfig(feature_dim=0)


def test_csv_round_trip(tmp_path):
    seq = synth_generate(SyntheticSceneConfig(n_train=30, n_test=0, feature_dim=3)).sequences[0]
    write_trajectory_csv(tmp_path / "train.csv", seq)
    back, report = read_trajectory_csv(tmp_path / "train.csv")
    assert np.array_equal(back.poses, seq.poses) and np.array_equal(back.features, seq.features)
    assert np.array_equal(back.frames, seq.frames) and report.normalized_quaternions == 0


def test_csv_missing_column_and_normalisation(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("frame,tx,ty,tz,qw,qx,qy\n0,0,0,0,1,0,0\n")
    with pytest.raises(DatasetError, match="qz"):
        read_trajectory_csv(p)
    p.write_text("frame,tx,ty,tz,qw,qx,qy,qz\n0,1,2,3,0.5,0,0,0\n1,1,2,3,1,0,0,0\n")
    seq, report = read_trajectory_csv(p)
    assert report.normalized_quaternions == 1 and np.array_equal(seq.poses[0, 3:], [1, 0, 0, 0])
    ds = load_dataset(p)
    assert len(ds.warnings) == 1
    p.write_text("frame,tx,ty,tz,qw,qx,qy,qz\n0,1,2,3,0,0,0,0\n")
    with pytest.raises(DatasetError, match="zero quaternion"):
        read_trajectory_csv(p)


def test_csv_directory_splits(tmp_path):
    ds = synth_generate(SyntheticSceneConfig(n_train=30, n_test=20, feature_dim=2))
    for s in ds.sequences:
        write_trajectory_csv(tmp_path / f"{s.split}.csv", s)
    loaded = load_dataset(tmp_path)
    assert sorted((s.name, s.split) for s in loaded.sequences) == [("test", "test"), ("train", "train")]
    assert loaded.feature_dim == 2


def test_sequence_validation():
    with pytest.raises(DatasetError):
        Sequence("bad", [0, 2, 1], np.zeros((3, 7)))
    with pytest.raises(DatasetError):
        Sequence("bad", [0, 1], np.zeros((3, 7)))
