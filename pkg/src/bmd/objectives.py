"""Adaptation model, self-training losses and their closed-form gradients.

The model is ``probs = softmax(V act(W x + b) + c)``. During adaptation only
the extractor ``(W, b)`` is trained; the classifier ``(V, c)`` stays frozen.
Pseudo-labels (hard or soft) are treated as constants when differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .numerics import as_matrix, make_rng, softmax_rows

__all__ = [
    "LOG_CLAMP",
    "SoftmaxLinearModel",
    "LossWeights",
    "forward",
    "ce_loss",
    "sce_loss",
    "label_smoothing_ce",
    "combined_loss",
    "gradients",
    "source_gradients",
    "SGDMomentum",
]

LOG_CLAMP = 1e-7


@dataclass
class SoftmaxLinearModel:
    extractor_weights: np.ndarray  # (d, D)
    extractor_bias: np.ndarray  # (d,)
    classifier_weights: np.ndarray  # (K, d)
    classifier_bias: np.ndarray  # (K,)
    activation: Literal["identity", "tanh"] = "tanh"
    classifier_frozen: bool = False

    def __post_init__(self):
        self.extractor_weights = as_matrix(self.extractor_weights, "extractor_weights")
        self.classifier_weights = as_matrix(self.classifier_weights, "classifier_weights")
        self.extractor_bias = np.asarray(self.extractor_bias, dtype=np.float64).ravel()
        self.classifier_bias = np.asarray(self.classifier_bias, dtype=np.float64).ravel()
        d, _ = self.extractor_weights.shape
        K, d2 = self.classifier_weights.shape
        if d2 != d or self.extractor_bias.size != d or self.classifier_bias.size != K:
            raise ValueError("inconsistent model parameter shapes")
        if self.activation not in ("identity", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.extractor_weights.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.extractor_weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.classifier_weights.shape[0]

    @classmethod
    def init(cls, D: int, d: int, K: int, seed: int = 0,
             activation: Literal["identity", "tanh"] = "tanh") -> "SoftmaxLinearModel":
        rng = make_rng(seed)
        return cls(
            extractor_weights=rng.normal(0.0, 1.0 / np.sqrt(D), size=(d, D)),
            extractor_bias=np.zeros(d),
            classifier_weights=rng.normal(0.0, 1.0 / np.sqrt(d), size=(K, d)),
            classifier_bias=np.zeros(K),
            activation=activation,
        )

    def copy(self) -> "SoftmaxLinearModel":
        return SoftmaxLinearModel(
            self.extractor_weights.copy(), self.extractor_bias.copy(),
            self.classifier_weights.copy(), self.classifier_bias.copy(),
            self.activation, self.classifier_frozen,
        )


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")


def _activate(model: SoftmaxLinearModel, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if model.activation == "tanh" else z


def forward(model: SoftmaxLinearModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(features, probs)`` for a batch of raw inputs."""
    x = as_matrix(x, "x")
    if x.shape[1] != model.input_dim:
        raise ValueError(f"input has {x.shape[1]} columns, model expects {model.input_dim}")
    h = _activate(model, x @ model.extractor_weights.T + model.extractor_bias)
    probs = softmax_rows(h @ model.classifier_weights.T + model.classifier_bias)
    return h, probs


def _clamped_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(p, LOG_CLAMP))


def _onehot(labels, K: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).ravel()
    out = np.zeros((y.size, K))
    out[np.arange(y.size), y] = 1.0
    return out


def ce_loss(probs, hard_labels) -> float:
    p = as_matrix(probs, "probs")
    y = np.asarray(hard_labels, dtype=np.int64).ravel()
    return float(-_clamped_log(p[np.arange(p.shape[0]), y]).mean())


def sce_loss(probs, soft_labels) -> float:
    """Symmetric cross-entropy: CE(target, pred) + CE(pred, target)."""
    p = as_matrix(probs, "probs")
    q = as_matrix(soft_labels, "soft_labels")
    per_row = -(q * _clamped_log(p)).sum(axis=1) - (p * _clamped_log(q)).sum(axis=1)
    return float(per_row.mean())


def label_smoothing_ce(probs, hard_labels, epsilon: float) -> float:
    """Cross-entropy against ``(1 - eps) * onehot + eps / K``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    p = as_matrix(probs, "probs")
    t = (1.0 - epsilon) * _onehot(hard_labels, p.shape[1]) + epsilon / p.shape[1]
    return float(-(t * _clamped_log(p)).sum(axis=1).mean())


def combined_loss(model, batch, static_labels, dynamic_labels, w: LossWeights) -> float:
    """``alpha * CE(static) + beta * SCE(dynamic)`` on one batch."""
    _, probs = forward(model, batch)
    loss = 0.0
    if w.alpha:
        loss += w.alpha * ce_loss(probs, static_labels)
    if w.beta:
        loss += w.beta * sce_loss(probs, dynamic_labels)
    return loss


def _soft_ce_logit_grad(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """d/dz of ``-sum_k t_k log max(p_k, clamp)`` per row, p = softmax(z)."""
    active = t * (p > LOG_CLAMP)
    return p * active.sum(axis=1, keepdims=True) - active


def _reverse_ce_logit_grad(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """d/dz of ``-sum_k p_k log max(q_k, clamp)`` per row."""
    a = _clamped_log(q)
    return -p * (a - (a * p).sum(axis=1, keepdims=True))


def _logit_grad(probs, static_labels, dynamic_labels, w: LossWeights) -> np.ndarray:
    B, K = probs.shape
    g = np.zeros_like(probs)
    if w.alpha:
        g += w.alpha * _soft_ce_logit_grad(probs, _onehot(static_labels, K))
    if w.beta:
        q = as_matrix(dynamic_labels, "dynamic_labels")
        g += w.beta * (_soft_ce_logit_grad(probs, q) + _reverse_ce_logit_grad(probs, q))
    return g / B


def _backprop_extractor(model, x, h, dlogits):
    dh = dlogits @ model.classifier_weights
    dz = dh * (1.0 - h * h) if model.activation == "tanh" else dh
    return dz.T @ x, dz.sum(axis=0), dh


def gradients(model: SoftmaxLinearModel, batch, static_labels, dynamic_labels,
              w: LossWeights) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of :func:`combined_loss` w.r.t. ``(W, b)`` of the extractor."""
    x = as_matrix(batch, "batch")
    h, probs = forward(model, x)
    dW, db, _ = _backprop_extractor(model, x, h, _logit_grad(probs, static_labels, dynamic_labels, w))
    return dW, db


def source_gradients(model: SoftmaxLinearModel, batch, labels, epsilon: float):
    """Gradients of :func:`label_smoothing_ce` for all four parameter blocks.

    Returns ``(dW, db, dV, dc)``.
    """
    x = as_matrix(batch, "batch")
    h, probs = forward(model, x)
    B, K = probs.shape
    t = (1.0 - epsilon) * _onehot(labels, K) + epsilon / K
    dlogits = _soft_ce_logit_grad(probs, t) / B
    dW, db, _ = _backprop_extractor(model, x, h, dlogits)
    return dW, db, dlogits.T @ h, dlogits.sum(axis=0)


@dataclass
class SGDMomentum:
    """Heavy-ball SGD: ``v <- mu v + g; p <- p - lr v``."""

    lr: float
    momentum: float = 0.9
    _velocity: dict = field(default_factory=dict, repr=False)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            v = self._velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self._velocity[name] = v
            params[name] -= self.lr * v
