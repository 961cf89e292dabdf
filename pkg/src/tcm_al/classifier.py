"""Linear softmax probe on frozen embeddings, and accuracy metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError
from .samplers import ProbabilityMatrix


@dataclass(frozen=True)
class LinearHead:
    weights: np.ndarray  # C x D
    bias: np.ndarray  # C

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    l2_penalty: float = 1e-4
    batch_size: int = 256
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.epochs < 1:
            raise InvalidInputError("epochs must be at least 1")
        if self.l2_penalty < 0:
            raise InvalidInputError("l2_penalty must be non-negative")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be positive")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError("momentum must lie in [0, 1)")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=1, keepdims=True)
    return shifted


def loss_and_grad(weights, bias, features, labels, l2_penalty):
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` and its gradient."""
    n = features.shape[0]
    logits = features @ weights.T + bias
    shift = logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(logits - shift).sum(axis=1)) + shift[:, 0]
    loss = float(np.mean(log_norm - logits[np.arange(n), labels]))
    loss += 0.5 * l2_penalty * float(np.sum(weights * weights))
    resid = softmax(logits)
    resid[np.arange(n), labels] -= 1.0
    resid /= n
    grad_w = resid.T @ features + l2_penalty * weights
    grad_b = resid.sum(axis=0)
    return loss, grad_w, grad_b


def _check_features(features, name="features"):
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contain non-finite values")
    return arr


def train(features, labels, class_count: int, config: TrainConfig = TrainConfig()):
    """Fit a linear head with momentum SGD and cosine learning-rate decay.

    Returns the head and the full-data training loss after every epoch.
    Rows of classes absent from ``labels`` stay at zero.
    """
    X = _check_features(features)
    y = np.asarray(labels, dtype=np.int64).ravel()
    n, d = X.shape
    if n < 1 or y.size != n:
        raise InvalidInputError(f"need one label per row, got {y.size} labels for {n} rows")
    if y.min() < 0 or y.max() >= class_count:
        raise InvalidInputError(f"labels must lie in [0, {class_count})")

    present = np.zeros(class_count, dtype=bool)
    present[y] = True
    W = np.zeros((class_count, d))
    b = np.zeros(class_count)
    vW = np.zeros_like(W)
    vb = np.zeros_like(b)

    # the mean softmax loss has curvature at most 0.5 * E||[x, 1]||^2
    curvature = 0.5 * (float(np.mean(np.einsum("ij,ij->i", X, X))) + 1.0)
    base_lr = min(config.learning_rate, 1.0 / curvature)

    batch = min(n, config.batch_size)
    rng = np.random.default_rng(config.seed)
    history = np.empty(config.epochs)
    for epoch in range(config.epochs):
        lr = base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / config.epochs))
        order = rng.permutation(n) if batch < n else np.arange(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            _, gW, gb = loss_and_grad(W, b, X[idx], y[idx], config.l2_penalty)
            gW[~present] = 0.0
            gb[~present] = 0.0
            vW = config.momentum * vW - lr * gW
            vb = config.momentum * vb - lr * gb
            W += vW
            b += vb
        history[epoch] = loss_and_grad(W, b, X, y, config.l2_penalty)[0]
    return LinearHead(W, b), history


def fit(features, labels, class_count: int, config: TrainConfig = TrainConfig()) -> LinearHead:
    return train(features, labels, class_count, config)[0]


def predict_logits(head: LinearHead, features) -> np.ndarray:
    X = _check_features(features)
    if X.shape[1] != head.weights.shape[1]:
        raise ShapeError(f"features have dimension {X.shape[1]}, head expects {head.weights.shape[1]}")
    return X @ head.weights.T + head.bias


def predict_proba(head: LinearHead, features, indices=None) -> ProbabilityMatrix:
    """Class probabilities for ``features``, tagged with their pool ``indices``.

    Row ``i`` of ``features`` belongs to pool index ``indices[i]``
    (defaults to ``0..len(features)-1``).
    """
    probs = softmax(predict_logits(head, features))
    if indices is None:
        indices = np.arange(probs.shape[0])
    return ProbabilityMatrix(indices, probs)


def predict(head: LinearHead, features) -> np.ndarray:
    return np.argmax(predict_logits(head, features), axis=1)


def accuracy(predictions, truth) -> float:
    pred = np.asarray(predictions).ravel()
    true = np.asarray(truth).ravel()
    if true.size == 0 or pred.size != true.size:
        raise InvalidInputError("accuracy needs equally sized, non-empty vectors")
    return float(np.mean(pred == true))


def balanced_accuracy(predictions, truth, class_count: int) -> float:
    """Mean recall over the classes that occur in ``truth``."""
    pred = np.asarray(predictions).ravel()
    true = np.asarray(truth, dtype=np.int64).ravel()
    if true.size == 0 or pred.size != true.size:
        raise InvalidInputError("balanced_accuracy needs equally sized, non-empty vectors")
    support = np.bincount(true, minlength=class_count)
    hits = np.bincount(true[pred == true], minlength=class_count)
    present = support > 0
    return float(np.mean(hits[present] / support[present]))
