"""Interaction layer, three-layer sigmoid head and cross-entropy loss."""
from __future__ import annotations

import numpy as np

from core.autodiff import Tensor, clip, dropout, log, mean, mul, sigmoid
from core.errors import ShapeError
from core.parameters import ParameterStore, ParamSpec
from models.base import linear

LOG_CLAMP = 1e-7
HEAD_WEIGHTS = ("W1", "W2", "W3")


def head_specs(concepts: int, hidden1: int, hidden2: int) -> list[ParamSpec]:
    return [
        ParamSpec("W1", (hidden1, concepts)),
        ParamSpec("b1", (1, hidden1), "bias"),
        ParamSpec("W2", (hidden2, hidden1)),
        ParamSpec("b2", (1, hidden2), "bias"),
        ParamSpec("W3", (1, hidden2)),
        ParamSpec("b3", (1, 1), "bias"),
    ]


def interaction(ks: Tensor, h_diff: Tensor, h_disc: Tensor, q: Tensor) -> Tensor:
    """x = Q_e ∘ (ks − h_diff) × h_disc; zero wherever the exercise skips a concept."""
    if ks.shape != h_diff.shape or ks.shape != q.shape:
        raise ShapeError("interaction", ks.shape, h_diff.shape, q.shape)
    if h_disc.shape != (ks.shape[0], 1):
        raise ShapeError("interaction", ks.shape, h_disc.shape)
    return mul(mul(q, ks - h_diff), h_disc)


def predict(
    x: Tensor,
    params: ParameterStore,
    rate: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """ŷ for every row of x; dropout follows each hidden activation at train time."""
    x1 = dropout(sigmoid(linear(x, params["W1"], params["b1"])), rate, rng, train)
    x2 = dropout(sigmoid(linear(x1, params["W2"], params["b2"])), rate, rng, train)
    return sigmoid(linear(x2, params["W3"], params["b3"]))


def loss(y_hat: Tensor, y) -> Tensor:
    """Mean binary cross-entropy with ŷ clamped to [1e-7, 1 − 1e-7]."""
    labels = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    if labels.shape[0] != y_hat.shape[0]:
        raise ShapeError("loss", y_hat.shape, labels.shape)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    p = clip(y_hat, LOG_CLAMP, 1.0 - LOG_CLAMP)
    target = Tensor(labels)
    ll = mul(target, log(p)) + mul(1.0 - target, log(1.0 - p))
    return -mean(ll)


def clamp_monotone(params: ParameterStore) -> None:
    """Project the head weights onto the non-negative orthant."""
    for name in HEAD_WEIGHTS:
        if name in params:
            np.maximum(params[name].data, 0.0, out=params[name].data)
