import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from changeannot.errors import ArgumentError
from changeannot.evalmetrics import Confusion, confusion, dataset_metrics, precision_recall_f1_iou


def brute_confusion(pred, gt):
    tp = fp = fn = tn = 0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            p, g = int(pred[i, j]), int(gt[i, j])
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
            else:
                tn += 1
    return Confusion(tp, fp, fn, tn)


def test_confusion_examples():
    ones, zeros = np.ones((2, 2), int), np.zeros((2, 2), int)
    assert confusion(ones, ones) == Confusion(4, 0, 0, 0)
    assert confusion(zeros, ones) == Confusion(0, 0, 4, 0)
    assert confusion([[1, 0], [0, 1]], [[1, 1], [0, 0]]) == Confusion(1, 1, 1, 1)
    with pytest.raises(ArgumentError):
        confusion(ones, np.ones((3, 2)))
    with pytest.raises(ArgumentError):
        confusion(ones * 2, ones)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_confusion_matches_brute_force(h, w, seed):
    rng = np.random.default_rng(seed)
    pred, gt = rng.integers(0, 2, (h, w)), rng.integers(0, 2, (h, w))
    c = confusion(pred, gt)
    assert c == brute_confusion(pred, gt)
    assert c.total == h * w


def test_metric_examples():
    p, r = 0.83, 0.82
    assert 2 * p * r / (p + r) == pytest.approx(0.825, abs=5e-4)
    f1 = 0.83
    assert f1 / (2 - f1) == pytest.approx(0.709, abs=5e-4)
    assert precision_recall_f1_iou(Confusion(0, 0, 0, 9)) == (0, 0, 0, 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
def test_metric_identities(tp, fp, fn, tn):
    m = precision_recall_f1_iou(Confusion(tp, fp, fn, tn))
    assert all(0 <= v <= 1 for v in m)
    if m.f1 > 0:
        assert m.iou == pytest.approx(m.f1 / (2 - m.f1), rel=1e-12)
    if m.precision > 0 and m.recall > 0:
        assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall), rel=1e-12)


def test_dataset_metrics_micro_average():
    ones, zeros = np.ones((4, 4), int), np.zeros((4, 4), int)
    single = dataset_metrics([(ones, ones)])
    assert single == precision_recall_f1_iou(confusion(ones, ones))
    # tile a: 16 tp; tile b: 16 fp. Pooled f1 = 32/48, per-tile mean = (1 + 0) / 2.
    a = (ones, ones)
    b = (ones, zeros)
    micro = dataset_metrics([a, b])
    assert micro.precision == pytest.approx(16 / 32)
    assert micro.f1 == pytest.approx(2 * 16 / (2 * 16 + 16))
    macro_f1 = (1.0 + 0.0) / 2
    assert micro.f1 != pytest.approx(macro_f1)
    assert dataset_metrics([a, b, a, b]) == micro
    with pytest.raises(ArgumentError):
        dataset_metrics([])
