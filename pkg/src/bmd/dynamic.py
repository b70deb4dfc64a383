"""Minibatch-level prototypes maintained by exponential moving average.

At each step the current (K, S, d) bank produces soft class distributions
for the batch and a responsibility-weighted batch estimate of every
prototype; the bank then moves a fraction ``1 - momentum`` towards that
estimate and is projected back onto the unit sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .labeling import PrototypeBank, prototype_scores
from .numerics import as_matrix, l2_normalize_rows, pairwise_similarity

__all__ = [
    "DEFAULT_MOMENTUM",
    "DynamicPrototypeState",
    "dynamic_soft_labels",
    "batch_prototype_estimate",
    "ema_update",
]

DEFAULT_MOMENTUM = 0.9999
_MIN_MASS = 1e-12


@dataclass(frozen=True)
class DynamicPrototypeState:
    bank: PrototypeBank
    momentum: float = DEFAULT_MOMENTUM
    updates_applied: int = 0
    # test hook: skip the unit-sphere projection after each EMA step
    renormalize: bool = True
    # similarities are divided by this before exp(); 1.0 is the plain form
    temperature: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")

    @classmethod
    def from_bank(cls, bank: PrototypeBank, momentum: float = DEFAULT_MOMENTUM,
                  renormalize: bool = True, temperature: float = 1.0) -> "DynamicPrototypeState":
        return cls(bank=PrototypeBank(bank.prototypes.copy(), bank.normalized, bank.degenerate.copy()),
                   momentum=momentum, renormalize=renormalize, temperature=temperature)


def dynamic_soft_labels(batch_features, state: DynamicPrototypeState) -> np.ndarray:
    """(N, K) row-stochastic soft labels from the best prototype of each class."""
    g = as_matrix(batch_features, "batch_features")
    if g.shape[0] == 0:
        raise ValueError("empty batch")
    return prototype_scores(g, state.bank, state.temperature)


def batch_prototype_estimate(batch_features, state: DynamicPrototypeState) -> np.ndarray:
    """Responsibility-weighted batch mean for each of the K*S prototypes.

    Responsibilities are a softmax of ``exp(similarity)`` over all K*S
    prototypes jointly. A prototype whose total responsibility in the batch
    is below 1e-12 keeps its current value.
    """
    g = l2_normalize_rows(as_matrix(batch_features, "batch_features"))
    if g.shape[0] == 0:
        raise ValueError("empty batch")
    flat = state.bank.flat()
    z = pairwise_similarity(g, flat) / state.temperature
    e = np.exp(z - z.max(axis=1, keepdims=True))
    resp = e / e.sum(axis=1, keepdims=True)  # (N, K*S)
    mass = resp.sum(axis=0)
    est = flat.copy()
    live = mass >= _MIN_MASS
    est[live] = (resp[:, live].T @ g) / mass[live, None]
    return est.reshape(state.bank.prototypes.shape)


def ema_update(state: DynamicPrototypeState, estimate) -> DynamicPrototypeState:
    """``c <- momentum * c + (1 - momentum) * estimate``, then renormalise."""
    est = np.asarray(estimate, dtype=np.float64)
    cur = state.bank.prototypes
    if est.shape != cur.shape:
        raise ValueError(f"estimate shape {est.shape} does not match bank {cur.shape}")
    lam = state.momentum
    new = lam * cur + (1.0 - lam) * est
    if state.renormalize:
        K, S, d = new.shape
        new = l2_normalize_rows(new.reshape(K * S, d)).reshape(K, S, d)
    bank = PrototypeBank(new, normalized=state.renormalize, degenerate=state.bank.degenerate.copy())
    return replace(state, bank=bank, updates_applied=state.updates_applied + 1)
