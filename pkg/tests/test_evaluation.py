import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tbstereo.disparity import DisparityMap
from tbstereo.evaluation import (
    DISPARITY_COLUMNS,
    NORMAL_COLUMNS,
    EmptyEvaluationError,
    disparity_metrics,
    loss_disparity,
    loss_nll,
    loss_normal,
    normal_metrics,
    smooth_l1,
)
from tbstereo.normals import FrameError, NormalMap

PRED = np.array([[1.0, 2.0], [3.0, 4.0]])
GT = np.array([[1.0, 3.0], [6.0, 4.5]])  # errors 0, 1, 3, 0.5


def test_disparity_fixture():
    r = disparity_metrics(PRED, GT)
    assert r.count == 4
    assert r.metrics["MAE"] == pytest.approx(1.125, abs=1e-15)
    assert r.metrics["RMSE"] == pytest.approx(math.sqrt(2.5625), abs=1e-15)
    assert r.metrics["BP-1"] == 50.0
    assert r.metrics["BP-2"] == 25.0
    assert r.metrics["D1"] == 25.0
    assert list(r.metrics) == list(DISPARITY_COLUMNS)


def test_d1_needs_relative_error_too():
    # |e| = 3 but only 3% of a 100 px ground truth: not a D1 outlier
    r = disparity_metrics(np.array([[103.0]]), np.array([[100.0]]))
    assert r.metrics["D1"] == 0.0 and r.metrics["BP-2"] == 100.0


def test_mask_and_nan_excluded():
    pred = PRED.copy()
    pred[1, 1] = np.nan
    mask = np.array([[True, True], [False, True]])
    r = disparity_metrics(pred, GT, mask)
    assert r.count == 2 and r.metrics["MAE"] == 0.5


def test_empty_evaluation():
    with pytest.raises(EmptyEvaluationError):
        disparity_metrics(PRED, GT, np.zeros((2, 2), bool))


def test_radian_maps_converted():
    H = 4  # pixels = radians * H / pi
    pred = DisparityMap(np.vstack([PRED, PRED]) * math.pi / H, "radians")
    gt = DisparityMap(np.vstack([GT, GT]), "pixels")
    r = disparity_metrics(pred, gt)
    assert r.metrics["MAE"] == pytest.approx(1.125, abs=1e-12)


def test_table_format():
    text = disparity_metrics(PRED, GT).table(DISPARITY_COLUMNS)
    head, row = text.splitlines()
    assert head.split() == list(DISPARITY_COLUMNS)
    assert row.split()[0] == "1.125"


@given(arrays(np.float64, (6, 5), elements=st.floats(0, 100)),
       arrays(np.float64, (6, 5), elements=st.floats(0, 100)))
def test_metric_orderings(p, g):
    m = disparity_metrics(p, g).metrics
    assert m["RMSE"] >= m["MAE"] - 1e-12
    assert m["BP-1"] >= m["BP-2"] >= m["D1"]


def test_rotation_invariance_bitwise(rng):
    p = rng.uniform(0, 60, (32, 64))
    g = p + rng.normal(0, 2, p.shape)
    base = disparity_metrics(p, g).metrics
    for k in (1, 13, 40):
        assert disparity_metrics(np.roll(p, k, 1), np.roll(g, k, 1)).metrics == base


def _nmap(v, frame="camera"):
    return NormalMap(np.asarray(v, float), frame)


def test_normal_fixture():
    gt = np.tile([0.0, 0.0, 1.0], (1, 4, 1))
    angles = np.radians([0.0, 6.0, 10.0, 45.0])
    pred = np.stack([np.sin(angles), 0 * angles, np.cos(angles)], -1)[None]
    r = normal_metrics(_nmap(pred), _nmap(gt))
    assert r.metrics["mean"] == pytest.approx(61 / 4, abs=1e-10)
    assert r.metrics["rmse"] == pytest.approx(math.sqrt((36 + 100 + 2025) / 4), abs=1e-10)
    assert [r.metrics[c] for c in NORMAL_COLUMNS[2:]] == [25.0, 50.0, 75.0, 75.0, 75.0]
    assert loss_normal(_nmap(pred), _nmap(gt)) == pytest.approx(float(np.mean(angles**2)), abs=1e-15)


def test_normal_frame_mismatch():
    n = np.tile([0.0, 0.0, 1.0], (1, 2, 1))
    with pytest.raises(FrameError):
        normal_metrics(_nmap(n), _nmap(n, "heading_aligned"))


def test_smooth_l1():
    assert smooth_l1(np.array([0.5, -2.0, 1.0])).tolist() == [0.125, 1.5, 0.5]


def test_loss_disparity_fixture():
    gt = np.array([[0.0, 0.0]])
    d0 = np.array([[0.5, 3.0]])  # smooth L1: 0.125 and 2.5
    it1 = np.array([[1.0, 1.0]])  # L1 1
    it2 = np.array([[0.0, 2.0]])  # L1 1
    val = loss_disparity(d0, [it1, it2], gt, gamma=0.5)
    assert val == pytest.approx((0.125 + 2.5) / 2 + 0.5 * 1.0 + 1.0, abs=1e-15)


def test_nll_minimised_at_true_error():
    gt = np.zeros((1, 1))
    for e in (0.3, 1.0, 4.0):
        pred = np.full((1, 1), e)
        grid = np.linspace(0.05, 10, 2000)
        vals = [loss_nll([pred], [np.full((1, 1), s)], gt) for s in grid]
        assert grid[int(np.argmin(vals))] == pytest.approx(e, abs=0.01)


def test_nll_rejects_bad_sigma():
    with pytest.raises(ValueError):
        loss_nll([np.zeros((1, 2))], [np.zeros((1, 2))], np.zeros((1, 2)))
    with pytest.raises(ValueError):
        loss_nll([np.zeros((1, 2))], [], np.zeros((1, 2)))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        disparity_metrics(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        loss_disparity(np.zeros((2, 2)), [np.zeros((2, 3))], np.zeros((2, 2)))


def test_normal_half_and_half():
    gt = np.tile([0.0, 0.0, 1.0], (1, 4, 1))
    angles = np.radians([4.0, 4.0, 10.0, 10.0])
    pred = np.stack([np.sin(angles), 0 * angles, np.cos(angles)], -1)[None]
    m = normal_metrics(_nmap(pred), _nmap(gt)).metrics
    assert m["mean"] == pytest.approx(7.0, abs=1e-12)
    assert m["delta<5"] == 50.0 and m["delta<11.5"] == 100.0


def test_normal_orthogonal_cases():
    gt = np.tile([0.0, 0.0, 1.0], (1, 4, 1))
    orth = np.tile([1.0, 0.0, 0.0], (1, 4, 1))
    m = normal_metrics(_nmap(orth), _nmap(gt)).metrics
    assert m["mean"] == pytest.approx(90.0) and m["delta<30"] == 0.0
    mixed = orth.copy()
    mixed[0, :2] = gt[0, :2]
    assert loss_normal(_nmap(mixed), _nmap(gt)) == pytest.approx(math.pi**2 / 8, abs=1e-12)


def test_loss_geometric_weights():
    gt = np.zeros((2, 2))
    assert loss_disparity(gt, [gt + 1, gt + 1], gt) == pytest.approx(1.9, abs=1e-12)
    assert loss_disparity(gt, [], gt) == 0.0
    assert loss_nll([gt + 1], [np.ones((2, 2))], gt) == pytest.approx(1.0, abs=1e-15)
    assert loss_nll([gt], [np.ones((2, 2))], gt) == 0.0
