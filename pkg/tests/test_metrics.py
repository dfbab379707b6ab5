import numpy as np

from surgdepth.losses import IGNORE_INDEX
from surgdepth.metrics import ConfusionAccumulator, mean_iou
from surgdepth.rng import make_rng


def _naive_miou(pred, label, k, ignore=IGNORE_INDEX):
    """Set-based IoU, computed independently of the confusion matrix."""
    keep = label != ignore
    pred, label = pred[keep], label[keep]
    ious = []
    for c in range(k):
        p = pred == c
        l = label == c
        union = np.logical_or(p, l).sum()
        if union == 0:
            continue
        ious.append(np.logical_and(p, l).sum() / union)
    return float(np.mean(ious)) if ious else 0.0


def test_perfect_prediction_scores_one():
    rng = make_rng(0)
    label = rng.integers(0, 4, size=(8, 8)).astype(np.int32)
    rep = mean_iou(label, label, 4)
    assert rep.mean_iou == 1.0
    assert rep.pixel_accuracy == 1.0


def test_disjoint_prediction_scores_zero():
    label = np.zeros((4, 4), np.int32)
    pred = np.ones((4, 4), np.int32)
    rep = mean_iou(pred, label, 2)
    assert rep.mean_iou == 0.0
    assert rep.pixel_accuracy == 0.0


def test_half_overlap_hand_computed():
    label = np.array([[0, 0], [1, 1]], np.int32)
    pred = np.array([[0, 1], [1, 1]], np.int32)
    rep = mean_iou(pred, label, 2)
    # class 0: inter 1, union 2 -> 0.5; class 1: inter 2, union 3
    assert abs(rep.per_class_iou[0][1] - 0.5) < 1e-12
    assert abs(rep.per_class_iou[1][1] - 2 / 3) < 1e-12
    assert abs(rep.mean_iou - (0.5 + 2 / 3) / 2) < 1e-12
    assert abs(rep.pixel_accuracy - 0.75) < 1e-12


def test_matches_naive_set_oracle_on_random_instances():
    rng = make_rng(1)
    for _ in range(20):
        k = int(rng.integers(2, 6))
        label = rng.integers(0, k, size=(9, 7)).astype(np.int32)
        pred = rng.integers(0, k, size=(9, 7)).astype(np.int32)
        label[rng.random((9, 7)) < 0.1] = IGNORE_INDEX
        rep = mean_iou(pred, label, k)
        assert abs(rep.mean_iou - _naive_miou(pred, label, k)) < 1e-12


def test_absent_class_excluded_from_mean():
    label = np.zeros((4, 4), np.int32)
    rep = mean_iou(label, label, 3)
    assert rep.per_class_iou[1][1] is None
    assert rep.per_class_iou[2][1] is None
    assert rep.mean_iou == 1.0


def test_ignored_pixels_do_not_count():
    label = np.zeros((2, 2), np.int32)
    label[0, 0] = IGNORE_INDEX
    pred = np.zeros((2, 2), np.int32)
    pred[0, 0] = 1  # wrong, but ignored
    rep = mean_iou(pred, label, 2)
    assert rep.mean_iou == 1.0
    assert rep.pixel_accuracy == 1.0


def test_accumulation_equals_concatenation():
    rng = make_rng(2)
    a_pred = rng.integers(0, 3, size=(5, 5)).astype(np.int32)
    a_lab = rng.integers(0, 3, size=(5, 5)).astype(np.int32)
    b_pred = rng.integers(0, 3, size=(5, 5)).astype(np.int32)
    b_lab = rng.integers(0, 3, size=(5, 5)).astype(np.int32)
    acc = ConfusionAccumulator(3)
    acc.add(a_pred, a_lab)
    acc.add(b_pred, b_lab)
    joint = mean_iou(np.concatenate([a_pred, b_pred]),
                     np.concatenate([a_lab, b_lab]), 3)
    assert acc.report().mean_iou == joint.mean_iou


def test_to_dict_round_trip():
    rep = mean_iou(np.zeros((2, 2), np.int32), np.zeros((2, 2), np.int32), 2)
    d = rep.to_dict()
    assert d["miou"] == 1.0
    assert d["per_class"][0] == [0, 1.0]
