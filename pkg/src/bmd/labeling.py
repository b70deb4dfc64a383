"""Static pseudo-label strategies.

* ``naive``: argmax of the classifier probabilities.
* ``mono``: probability-weighted class centroids, nearest-prototype
  assignment, optionally refined with indicator-weighted centroids.
* ``bp``: each class averages its own top-M most confident instances, so
  easy classes cannot crowd hard ones out of prototype estimation.
* ``bmp``: as ``bp`` but each class's selection is split into S prototypes
  with k-means; an instance scores a class by its best-matching prototype.

All features are L2-normalised on entry and prototypes are kept on the unit
sphere, so "distance" means cosine distance and ``exp(similarity)`` stays in
[1/e, e]. Ties go to the lowest class (or instance) index everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .clustering import KMeansConfig, kmeans
from .numerics import as_matrix, l2_normalize_rows, pairwise_similarity

__all__ = [
    "PrototypeBank",
    "LabelBank",
    "SamplingSpec",
    "Strategy",
    "DEFAULT_ROUNDS",
    "naive_labels",
    "mono_prototypes",
    "nearest_prototype_labels",
    "mono_refine",
    "compute_M",
    "top_m_select",
    "prototype_scores",
    "bp_prototypes",
    "bmp_prototypes",
]

Strategy = Literal["naive", "mono", "bp", "bmp"]

DEFAULT_ROUNDS = 2
_DEGENERATE_NORM = 1e-12


@dataclass
class PrototypeBank:
    """``prototypes`` has shape (K, S, d); S == 1 is the monocentric case."""

    prototypes: np.ndarray
    normalized: bool = True
    degenerate: np.ndarray | None = None  # (K,) bool, classes with no usable prototype

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        if self.prototypes.ndim != 3:
            raise ValueError("prototypes must have shape (K, S, d)")
        if self.degenerate is None:
            self.degenerate = np.zeros(self.num_classes, dtype=bool)

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def per_class_count(self) -> int:
        return self.prototypes.shape[1]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[2]

    def flat(self) -> np.ndarray:
        """(K*S, d) view, class-major."""
        return self.prototypes.reshape(-1, self.dim)

    @classmethod
    def from_centroids(cls, centroids) -> "PrototypeBank":
        """Normalise a (K, S, d) stack, flagging classes whose prototypes are all zero."""
        c = np.asarray(centroids, dtype=np.float64)
        K, S, d = c.shape
        flat = c.reshape(K * S, d)
        norms = np.sqrt(np.einsum("ij,ij->i", flat, flat))
        flat = l2_normalize_rows(flat)
        flat[norms < _DEGENERATE_NORM] = 0.0
        degenerate = (norms < _DEGENERATE_NORM).reshape(K, S).all(axis=1)
        return cls(prototypes=flat.reshape(K, S, d), normalized=True, degenerate=degenerate)


@dataclass
class LabelBank:
    hard_labels: np.ndarray
    strategy: str
    soft_labels: np.ndarray | None = None
    refinement_rounds_used: int = 0
    # per-class index sets aggregated into each prototype (bp/bmp only)
    selections: list[np.ndarray] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.hard_labels)


@dataclass(frozen=True)
class SamplingSpec:
    num_classes: int
    n_t: int
    ratio: float = 3.0

    def __post_init__(self):
        if not self.ratio > 0:
            raise ValueError("ratio r must be > 0")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")

    @property
    def M(self) -> int:
        return compute_M(self)


def compute_M(spec: SamplingSpec) -> int:
    """Per-class selection size ``max(1, floor(n_t / (r * K)))``."""
    return max(1, int(np.floor(spec.n_t / (spec.ratio * spec.num_classes))))


def _first_argmax(scores: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first maximum
    return np.argmax(scores, axis=1).astype(np.int64)


def naive_labels(probs) -> LabelBank:
    p = as_matrix(probs, "probs")
    return LabelBank(hard_labels=_first_argmax(p), soft_labels=p.copy(), strategy="naive")


def mono_prototypes(features, probs) -> PrototypeBank:
    """Probability-weighted mean feature per class, then normalised.

    Classes whose total weight is below 1e-12 get a zero prototype and are
    marked degenerate.
    """
    g = l2_normalize_rows(as_matrix(features, "features"))
    p = as_matrix(probs, "probs")
    if g.shape[0] != p.shape[0]:
        raise ValueError("features and probs must have the same number of rows")
    if g.shape[0] == 0:
        raise ValueError("need at least one instance")
    weight = p.sum(axis=0)
    sums = p.T @ g
    live = weight >= _DEGENERATE_NORM
    centroids = np.zeros_like(sums)
    centroids[live] = sums[live] / weight[live, None]
    bank = PrototypeBank.from_centroids(centroids[:, None, :])
    bank.degenerate |= ~live
    return bank


def _class_similarity(g: np.ndarray, bank: PrototypeBank) -> np.ndarray:
    """(n, K) best similarity over each class's S prototypes; degenerate classes -inf."""
    K, S, _ = bank.prototypes.shape
    sims = pairwise_similarity(g, bank.flat()).reshape(g.shape[0], K, S)
    best = sims.max(axis=2)
    if bank.degenerate.any():
        best[:, bank.degenerate] = -np.inf
    return best


def prototype_scores(features, bank: PrototypeBank, temperature: float = 1.0) -> np.ndarray:
    """Class membership ``max_i exp(g.c_k^i) / sum_j max_i exp(g.c_j^i)``.

    For S == 1 this is the softmax over per-class similarities. Degenerate
    classes receive probability zero. ``temperature`` divides the
    similarities before ``exp``.
    """
    g = l2_normalize_rows(as_matrix(features, "features"))
    return _scores_from_best(_class_similarity(g, bank), temperature)


def _scores_from_best(best: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    # -inf columns (degenerate classes) become exactly 0
    z = best if temperature == 1.0 else best / temperature
    e = np.exp(z - z.max(axis=1, keepdims=True)) if temperature < 1.0 else np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _assign(g: np.ndarray, bank: PrototypeBank) -> np.ndarray:
    if bank.degenerate.all():
        raise ValueError("all prototypes are degenerate")
    return _first_argmax(_class_similarity(g, bank))


def nearest_prototype_labels(features, bank: PrototypeBank, distance: str = "cosine") -> LabelBank:
    """Nearest-prototype classifier under cosine distance.

    ``argmin_k (1 - cos)`` is evaluated as ``argmax_k cos`` so the result is
    bit-for-bit the same ordering the multicentric path uses.
    """
    if distance != "cosine":
        raise ValueError(f"unsupported distance {distance!r}")
    if bank.per_class_count != 1:
        raise ValueError("nearest_prototype_labels expects a monocentric bank (S=1)")
    g = l2_normalize_rows(as_matrix(features, "features"))
    return LabelBank(hard_labels=_assign(g, bank), strategy="mono")


def _indicator_centroids(g, labels, K, previous: np.ndarray) -> np.ndarray:
    out = previous.copy()
    for k in range(K):
        mask = labels == k
        if mask.any():
            out[k, 0] = g[mask].mean(axis=0)
    return out


def mono_refine(features, labels: LabelBank, rounds: int, num_classes: int | None = None,
                initial: PrototypeBank | None = None) -> tuple[PrototypeBank, LabelBank]:
    """Alternate indicator-weighted centroids and nearest-prototype reassignment.

    A class that loses all members keeps its previous prototype (from
    ``initial`` when given, otherwise a zero, degenerate one).
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    g = l2_normalize_rows(as_matrix(features, "features"))
    hard = np.asarray(labels.hard_labels, dtype=np.int64)
    K = num_classes if num_classes is not None else (
        initial.num_classes if initial is not None else int(hard.max()) + 1)
    if initial is not None:
        centroids = initial.prototypes.copy()
    else:
        centroids = np.zeros((K, 1, g.shape[1]))
    bank = None
    for _ in range(rounds):
        centroids = _indicator_centroids(g, hard, K, centroids)
        bank = PrototypeBank.from_centroids(centroids)
        centroids = bank.prototypes
        hard = _assign(g, bank)
    out = LabelBank(hard_labels=hard, strategy="mono", refinement_rounds_used=rounds,
                    soft_labels=prototype_scores(g, bank))
    return bank, out


def top_m_select(scores, M: int) -> np.ndarray:
    """Indices of the ``M`` largest scores, ties to the lowest index.

    Returned in ascending index order.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if M < 1:
        raise ValueError("M must be >= 1")
    m = min(M, s.size)
    # stable sort on -score keeps lower indices first among equals
    order = np.argsort(-s, kind="stable")
    return np.sort(order[:m])


def _select_per_class(scores: np.ndarray, M: int) -> list[np.ndarray]:
    return [top_m_select(scores[:, k], M) for k in range(scores.shape[1])]


def _check_inputs(features, probs):
    g = l2_normalize_rows(as_matrix(features, "features"))
    p = as_matrix(probs, "probs")
    if g.shape[0] != p.shape[0]:
        raise ValueError("features and probs must have the same number of rows")
    if g.shape[0] == 0:
        raise ValueError("need at least one instance")
    return g, p


def bp_prototypes(features, probs, spec: SamplingSpec, rounds: int = DEFAULT_ROUNDS
                  ) -> tuple[PrototypeBank, LabelBank]:
    """Class-balanced monocentric prototypes.

    Round 0 ranks instances by classifier probability for each class; each
    refinement round re-ranks by prototype membership. Every class averages
    exactly ``min(M, n)`` instances regardless of the other classes.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    g, p = _check_inputs(features, probs)
    M = compute_M(spec)
    scores = p
    bank = None
    selections: list[np.ndarray] = []
    for _ in range(rounds + 1):
        selections = _select_per_class(scores, M)
        centroids = np.stack([g[idx].mean(axis=0) for idx in selections])[:, None, :]
        bank = PrototypeBank.from_centroids(centroids)
        scores = prototype_scores(g, bank)
    labels = LabelBank(hard_labels=_assign(g, bank), strategy="bp", soft_labels=scores,
                       refinement_rounds_used=rounds, selections=selections)
    return bank, labels


def bmp_prototypes(features, probs, spec: SamplingSpec, S: int, kcfg: KMeansConfig | None = None,
                   rounds: int = DEFAULT_ROUNDS) -> tuple[PrototypeBank, LabelBank]:
    """Class-balanced multicentric prototypes.

    Same selection schedule as :func:`bp_prototypes`, but the selected
    features of each class are clustered into ``S`` centroids. With ``S=1``
    the hard labels coincide with ``bp_prototypes`` exactly.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    if kcfg is None:
        kcfg = KMeansConfig(num_clusters=S)
    elif kcfg.num_clusters != S:
        kcfg = KMeansConfig(num_clusters=S, max_iters=kcfg.max_iters, tol=kcfg.tol,
                            seed=kcfg.seed, init=kcfg.init)
    g, p = _check_inputs(features, probs)
    M = compute_M(spec)
    scores = p
    bank = None
    selections: list[np.ndarray] = []
    for _ in range(rounds + 1):
        selections = _select_per_class(scores, M)
        centroids = []
        for idx in selections:
            assert idx.size > 0
            centroids.append(kmeans(g[idx], kcfg).centroids)
        bank = PrototypeBank.from_centroids(np.stack(centroids))
        scores = prototype_scores(g, bank)
    labels = LabelBank(hard_labels=_assign(g, bank), strategy="bmp", soft_labels=scores,
                       refinement_rounds_used=rounds, selections=selections)
    return bank, labels
