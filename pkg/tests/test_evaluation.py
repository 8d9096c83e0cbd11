import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqloc.data import ClipDataset, Sequence
from seqloc.evaluation import (CDF_COLUMNS, HIST_COLUMNS, REPORT_COLUMNS, SUMMARY_COLUMNS, ErrorReport,
                               central_window_starts, error_distribution, evaluate, predict_sequence,
                               predict_sequence_raw, sweep_window_lengths, write_all)
from seqloc.model import Model, ModelConfig
from seqloc.numerics import make_rng
from seqloc.training import predict_raw

from conftest import random_quaternion


def random_traj(r, n):
    q = np.stack([random_quaternion(r) for _ in range(n)])
    return np.concatenate([r.normal(size=(n, 3)), q], axis=1)


def test_perfect_prediction_scores_zero():
    gt = random_traj(np.random.default_rng(0), 12)
    rep = evaluate(gt, gt)
    assert not rep.translation.any() and not rep.rotation.any()


def test_summary_arithmetic():
    rep = ErrorReport([1, 2, 3, 4, 100], [0, 0, 0, 0, 0])
    s = rep.summary()["translation_m"]
    assert s["median"] == 3 and s["mean"] == 22 and s["max"] == 100 and s["count"] == 5


@given(st.integers(0, 2**32 - 1))
def test_errors_match_scalar_recomputation(seed):
    r = np.random.default_rng(seed)
    pred, gt = random_traj(r, 6), random_traj(r, 6)
    rep = evaluate(pred, gt)
    for k in range(6):
        t = math.sqrt(sum((pred[k, j] - gt[k, j]) ** 2 for j in range(3)))
        d = abs(sum(pred[k, 3 + j] * gt[k, 3 + j] for j in range(4)))
        assert math.isclose(rep.translation[k], t, rel_tol=1e-12)
        assert abs(rep.rotation[k] - math.degrees(2 * math.acos(min(d, 1.0)))) < 1e-5


def test_evaluate_validation():
    with pytest.raises(ValueError):
        evaluate(np.zeros((2, 7)) + [0, 0, 0, 1, 0, 0, 0], np.zeros((3, 7)) + [0, 0, 0, 1, 0, 0, 0])
    with pytest.raises(ValueError):
        evaluate(np.zeros((0, 7)), np.zeros((0, 7)))


@given(st.integers(1, 40), st.integers(1, 40))
def test_central_windows_cover_each_frame_once(n, window):
    if window > n:
        with pytest.raises(ValueError):
            central_window_starts(n, window)
        return
    starts = central_window_starts(n, window)
    t = np.arange(n)
    assert np.all((starts >= 0) & (starts <= n - window))
    assert np.all((t >= starts) & (t < starts + window))
    # No other window places the frame closer to its centre (ties go to the earlier window).
    centre = (window - 1) / 2
    for k in range(n):
        best = min(range(max(0, k - window + 1), min(k, n - window) + 1), key=lambda s: (abs(k - s - centre), s))
        assert starts[k] == best


def test_sweep_prediction_uses_centre_window():
    r = make_rng(0)
    model = Model.init(ModelConfig(3, 4), r)
    feats = r.normal(size=(15, 3))
    raw = predict_sequence_raw(model, feats, 5)
    for k in range(15):
        s = central_window_starts(15, 5)[k]
        assert np.allclose(raw[k], predict_raw(model, feats[s:s + 5])[k - s], rtol=0, atol=1e-12)


def test_sweep_rules():
    r = make_rng(1)
    model = Model.init(ModelConfig(3, 4), r)
    seq = Sequence("test", range(30), random_traj(np.random.default_rng(0), 30), r.normal(size=(30, 3)), "test")
    ds = ClipDataset([seq])
    res = sweep_window_lengths(model, ds, [10, 1, 5, 40])
    assert res.lengths == [1, 5, 10] and res.skipped == [40]
    # Length 1 is frame-by-frame prediction.
    one = predict_sequence(model, seq.features, 1)
    per_frame = np.stack([predict_sequence(model, seq.features[k:k + 1], 1)[0] for k in range(30)])
    assert np.allclose(one, per_frame, rtol=0, atol=1e-12)
    assert math.isclose(res.median_errors[0], np.median(np.linalg.norm(one[:, :3] - seq.poses[:, :3], axis=1)))
    with pytest.raises(ValueError):
        sweep_window_lengths(model, ds, [5, 5])
    with pytest.raises(ValueError):
        sweep_window_lengths(model, ds, [0])


def test_distribution_of_zero_errors():
    (errs, frac), (edges, counts) = error_distribution(ErrorReport(np.zeros(5), np.zeros(5)), 0.1)
    assert np.array_equal(frac, [0.2, 0.4, 0.6, 0.8, 1.0]) and np.all(errs == 0)
    assert list(counts) == [5] and np.allclose(edges, [0, 0.1])
    with pytest.raises(ValueError):
        error_distribution(ErrorReport(np.zeros(2), np.zeros(2)), 0.0)


@given(st.lists(st.floats(0, 50), min_size=1, max_size=60), st.floats(0.01, 5))
def test_distribution_properties(errs, width):
    (e, frac), (edges, counts) = error_distribution(ErrorReport(errs, np.zeros(len(errs))), width)
    assert np.all(np.diff(e) >= 0) and np.all(np.diff(frac) > 0) and frac[-1] == 1.0
    assert counts.sum() == len(errs)
    assert edges[0] == 0 and edges[-1] > max(errs) - 1e-9


def test_csv_outputs(tmp_path):
    r = np.random.default_rng(2)
    rep = evaluate(random_traj(r, 9), random_traj(r, 9), np.arange(100, 109))
    write_all(rep, tmp_path, bin_width=0.5)
    read = lambda name: list(csv.reader(open(tmp_path / name)))
    report = read("report.csv")
    assert tuple(report[0]) == REPORT_COLUMNS and len(report) == 10 and report[1][0] == "100"
    assert [float(row[1]) for row in report[1:]] == list(rep.translation)
    summary = read("summary.csv")
    assert tuple(summary[0]) == SUMMARY_COLUMNS and float(summary[1][1]) == rep.summary()["translation_m"]["median"]
    assert tuple(read("cdf.csv")[0]) == CDF_COLUMNS and tuple(read("hist.csv")[0]) == HIST_COLUMNS
    assert sum(int(row[2]) for row in read("hist.csv")[1:]) == 9
