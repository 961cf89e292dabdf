import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from tcm_al.classifier import (
    LinearHead,
    TrainConfig,
    accuracy,
    balanced_accuracy,
    fit,
    loss_and_grad,
    predict,
    predict_proba,
    softmax,
    train,
)
from tcm_al.errors import InvalidInputError, ShapeError


def finite_difference_grad(W, b, X, y, l2, eps=1e-6):
    def loss(W_, b_):
        return loss_and_grad(W_, b_, X, y, l2)[0]

    gW = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += eps
        Wm[idx] -= eps
        gW[idx] = (loss(Wp, b) - loss(Wm, b)) / (2 * eps)
    gb = np.zeros_like(b)
    for i in range(b.size):
        bp, bm = b.copy(), b.copy()
        bp[i] += eps
        bm[i] -= eps
        gb[i] = (loss(W, bp) - loss(W, bm)) / (2 * eps)
    return gW, gb


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, d, c = rng.integers(1, 21), rng.integers(1, 6), rng.integers(2, 5)
    X = rng.standard_normal((n, d))
    y = rng.integers(0, c, n)
    W = rng.standard_normal((c, d))
    b = rng.standard_normal(c)
    _, gW, gb = loss_and_grad(W, b, X, y, 1e-2)
    fW, fb = finite_difference_grad(W, b, X, y, 1e-2)
    assert relative_error(np.concatenate([gW.ravel(), gb]), np.concatenate([fW.ravel(), fb])) < 1e-4


def test_separable_line():
    X = np.array([[-1.0], [1.0]])
    y = np.array([0, 1])
    head = fit(X, y, 2, TrainConfig())
    assert accuracy(predict(head, X), y) == 1.0


def test_epochs_boundary():
    with pytest.raises(InvalidInputError):
        TrainConfig(epochs=0)
    head = fit(np.ones((3, 2)), np.array([0, 1, 1]), 2, TrainConfig(epochs=1))
    assert np.all(np.isfinite(head.weights)) and np.all(np.isfinite(head.bias))


def test_duplicated_training_set_gives_same_head(rng):
    X = rng.standard_normal((12, 3))
    y = rng.integers(0, 3, 12)
    cfg = TrainConfig(epochs=50)
    a = fit(X, y, 3, cfg)
    b = fit(np.vstack([X, X]), np.concatenate([y, y]), 3, cfg)
    np.testing.assert_allclose(a.weights, b.weights, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(a.bias, b.bias, rtol=1e-9, atol=1e-12)


def test_loss_decreases_and_deterministic(rng):
    X = rng.standard_normal((300, 4))
    y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 0)
    cfg = TrainConfig(batch_size=64, seed=3)
    head, hist = train(X, y, 3, cfg)
    assert hist[-1] <= hist[0]
    head2, _ = train(X, y, 3, cfg)
    assert head.weights.tobytes() == head2.weights.tobytes()


def test_absent_classes_keep_zero_rows(rng):
    X = rng.standard_normal((10, 2))
    y = np.array([0, 2] * 5)
    head = fit(X, y, 4, TrainConfig(epochs=20))
    assert np.all(head.weights[[1, 3]] == 0) and np.all(head.bias[[1, 3]] == 0)
    assert predict_proba(head, X).values.shape == (10, 4)


def test_fit_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        fit(np.array([[np.inf]]), np.array([0]), 2)
    with pytest.raises(InvalidInputError):
        fit(np.zeros((2, 1)), np.array([0, 2]), 2)


def test_predict_proba_properties(rng):
    zero = LinearHead(np.zeros((5, 3)), np.zeros(5))
    np.testing.assert_allclose(predict_proba(zero, rng.standard_normal((4, 3))).values, 0.2)
    logits = rng.standard_normal((6, 4))
    np.testing.assert_allclose(softmax(logits + 123.0), softmax(logits), rtol=1e-12)
    big = LinearHead(np.zeros((3, 1)), np.array([800.0, 0.0, 0.0]))
    np.testing.assert_allclose(predict_proba(big, np.ones((1, 1))).values, [[1.0, 0.0, 0.0]])
    with pytest.raises(ShapeError):
        predict_proba(zero, np.zeros((2, 4)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 300))
def test_probability_rows_sum_to_one(seed, scale):
    rng = np.random.default_rng(seed)
    head = LinearHead(rng.standard_normal((4, 3)) * scale, rng.standard_normal(4) * scale)
    rows = predict_proba(head, rng.standard_normal((20, 3))).values
    assert np.all(np.abs(rows.sum(axis=1) - 1) <= 1e-6)


def test_accuracy_examples():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    assert accuracy([0, 1, 1, 1], [0, 1, 1, 0]) == 0.75
    with pytest.raises(InvalidInputError):
        accuracy([], [])


def test_balanced_accuracy_examples():
    # recall 1.0 for class 0, 0.5 for class 1
    assert balanced_accuracy([0, 0, 1, 0], [0, 0, 1, 1], 2) == 0.75
    assert balanced_accuracy([0, 1, 1], [0, 1, 1], 3) == 1.0
    with pytest.raises(InvalidInputError):
        balanced_accuracy([], [], 2)


def test_balanced_equals_plain_accuracy_on_balanced_truth(rng):
    truth = np.repeat(np.arange(5), 40)
    pred = rng.integers(0, 5, truth.size)
    assert abs(balanced_accuracy(pred, truth, 5) - accuracy(pred, truth)) <= 1e-12


def lbfgs_optimum(X, y, c, l2):
    d = X.shape[1]

    def objective(p):
        W, b = p[: c * d].reshape(c, d), p[c * d:]
        loss, gW, gb = loss_and_grad(W, b, X, y, l2)
        return loss, np.concatenate([gW.ravel(), gb])

    res = minimize(objective, np.zeros(c * d + c), jac=True, method="L-BFGS-B",
                   options=dict(maxiter=50000, ftol=1e-15, gtol=1e-12))
    return res.fun


def test_fit_reaches_convex_optimum():
    rng = np.random.default_rng(99)
    cfg = TrainConfig(epochs=1000, l2_penalty=1e-2)
    X = rng.standard_normal((20, 3))
    y = np.array([0, 1, 2] + list(rng.integers(0, 3, 17)))
    _, hist = train(X, y, 3, cfg)
    assert hist[-1] - lbfgs_optimum(X, y, 3, cfg.l2_penalty) < 1e-3
