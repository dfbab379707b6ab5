import math

import numpy as np
import pytest

from surgdepth import tensor as T
from surgdepth.errors import DataError, NumericError
from surgdepth.gradcheck import grad_check
from surgdepth.losses import IGNORE_INDEX, cross_entropy_loss
from surgdepth.rng import make_rng


def test_uniform_logits_give_log_k():
    logits = T.Tensor(np.zeros((5, 3, 3), np.float32))
    labels = np.zeros((3, 3), np.int32)
    loss = cross_entropy_loss(logits, labels)
    assert abs(loss.item() - math.log(5)) < 1e-6


def test_matches_naive_loop():
    rng = make_rng(0)
    k, h, w = 4, 5, 6
    logits = rng.normal(size=(k, h, w)).astype(np.float32)
    labels = rng.integers(0, k, size=(h, w)).astype(np.int32)
    labels[0, 0] = IGNORE_INDEX
    loss = cross_entropy_loss(T.Tensor(logits), labels).item()
    total, n = 0.0, 0
    for y in range(h):
        for x in range(w):
            if labels[y, x] == IGNORE_INDEX:
                continue
            z = logits[:, y, x].astype(np.float64)
            total += math.log(np.exp(z - z.max()).sum()) + z.max() - z[labels[y, x]]
            n += 1
    assert abs(loss - total / n) < 1e-5


def test_ignored_pixels_have_no_gradient():
    rng = make_rng(1)
    logits = T.Tensor(rng.normal(size=(3, 4, 4)).astype(np.float32),
                      requires_grad=True)
    labels = rng.integers(0, 3, size=(4, 4)).astype(np.int32)
    labels[2, 3] = IGNORE_INDEX
    T.backward(cross_entropy_loss(logits, labels))
    np.testing.assert_array_equal(logits.grad[:, 2, 3], 0.0)
    assert np.abs(logits.grad).max() > 0


def test_gradient_matches_finite_differences():
    rng = make_rng(2)
    logits = T.Tensor(rng.normal(size=(3, 4, 4)), requires_grad=True)
    labels = rng.integers(0, 3, size=(4, 4)).astype(np.int32)
    rep = grad_check(lambda: cross_entropy_loss(logits, labels),
                     [("logits", logits)], tol=1e-4)
    assert rep.passed, rep


def test_perfect_prediction_loss_near_zero():
    labels = np.array([[0, 1], [2, 0]], np.int32)
    logits = np.full((3, 2, 2), -50.0, np.float32)
    for y in range(2):
        for x in range(2):
            logits[labels[y, x], y, x] = 50.0
    assert cross_entropy_loss(T.Tensor(logits), labels).item() < 1e-6


def test_rejects_out_of_range_labels():
    logits = T.Tensor(np.zeros((3, 2, 2), np.float32))
    with pytest.raises(DataError):
        cross_entropy_loss(logits, np.full((2, 2), 7, np.int32))


def test_rejects_all_ignored():
    logits = T.Tensor(np.zeros((3, 2, 2), np.float32))
    with pytest.raises(DataError):
        cross_entropy_loss(logits, np.full((2, 2), IGNORE_INDEX, np.int32))


def test_rejects_non_finite_logits():
    logits = np.zeros((3, 2, 2), np.float32)
    logits[0, 0, 0] = np.nan
    with pytest.raises(NumericError):
        cross_entropy_loss(T.Tensor(logits), np.zeros((2, 2), np.int32))


def test_rejects_shape_mismatch():
    with pytest.raises(DataError):
        cross_entropy_loss(T.Tensor(np.zeros((3, 2, 2), np.float32)),
                           np.zeros((3, 3), np.int32))


def test_large_logits_stay_finite():
    logits = T.Tensor(np.array([[[500.0]], [[-500.0]]], np.float32),
                      requires_grad=True)
    loss = cross_entropy_loss(logits, np.zeros((1, 1), np.int32))
    assert np.isfinite(loss.item())
    T.backward(loss)
    assert np.all(np.isfinite(logits.grad))
