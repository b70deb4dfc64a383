"""Synthetic two-domain Gaussian mixtures and class-balance metrics.

Target ground truth never travels with the target inputs: it is wrapped in
:class:`HeldOutLabels`, which can score predictions but does not hand the
labels back to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import make_rng

__all__ = [
    "GmmDomainSpec",
    "LabeledSet",
    "TargetSet",
    "HeldOutLabels",
    "MetricsReport",
    "generate_domain_pair",
    "labeled_target",
    "hard_truck_profile",
    "separable_profile",
    "compute_metrics",
    "pseudo_label_accuracy",
]


@dataclass
class GmmDomainSpec:
    class_means: np.ndarray  # (K, D)
    shifts: np.ndarray  # (K, D); target mean = source mean + shift
    source_counts: list[int]
    target_counts: list[int]
    cov_scale: float = 1.0
    seed: int = 0
    # optional per-class target spread; defaults to cov_scale everywhere
    target_cov_scales: list[float] | None = None
    # optional (K, modes, D) sub-cluster offsets shared by both domains;
    # samples of a class are spread round-robin over its modes
    mode_offsets: np.ndarray | None = None

    def __post_init__(self):
        self.class_means = np.atleast_2d(np.asarray(self.class_means, dtype=np.float64))
        self.shifts = np.atleast_2d(np.asarray(self.shifts, dtype=np.float64))
        if self.class_means.shape != self.shifts.shape:
            raise ValueError("class_means and shifts must have the same shape")
        K = self.class_means.shape[0]
        if K < 2:
            raise ValueError("need at least two classes")
        if len(self.source_counts) != K or len(self.target_counts) != K:
            raise ValueError("per-class counts must have length K")
        if min(self.source_counts) < 1 or min(self.target_counts) < 1:
            raise ValueError("every class needs at least one sample per domain")
        if self.cov_scale < 0:
            raise ValueError("cov_scale must be non-negative")
        if self.mode_offsets is not None:
            self.mode_offsets = np.asarray(self.mode_offsets, dtype=np.float64)
            if self.mode_offsets.ndim != 3 or self.mode_offsets.shape[0] != K \
                    or self.mode_offsets.shape[2] != self.D:
                raise ValueError("mode_offsets must have shape (K, modes, D)")

    @property
    def K(self) -> int:
        return self.class_means.shape[0]

    @property
    def D(self) -> int:
        return self.class_means.shape[1]


@dataclass
class LabeledSet:
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class MetricsReport:
    overall_accuracy: float
    per_class: list[float]  # NaN for classes absent from the ground truth
    acc_mean: float
    acc_std: float
    cv: float
    missing_classes: list[int] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "per_class": [None if np.isnan(a) else a for a in self.per_class],
            "acc_mean": self.acc_mean,
            "acc_std": self.acc_std,
            "cv": self.cv,
            "missing_classes": list(self.missing_classes),
        }


def compute_metrics(predictions, ground_truth, K: int) -> MetricsReport:
    """Per-class accuracy and its mean, sample std (ddof=1) and ratio c_v."""
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    truth = np.asarray(ground_truth, dtype=np.int64).ravel()
    if pred.shape != truth.shape:
        raise ValueError("predictions and ground truth must be aligned")
    correct = pred == truth
    per_class = []
    missing = []
    for k in range(K):
        mask = truth == k
        if mask.any():
            per_class.append(float(correct[mask].mean()))
        else:
            per_class.append(float("nan"))
            missing.append(k)
    return _summarise(per_class, float(correct.mean()) if correct.size else float("nan"), missing)


def _summarise(per_class, overall, missing=()) -> MetricsReport:
    vals = np.array([a for a in per_class if not np.isnan(a)])
    mu = float(vals.mean()) if vals.size else float("nan")
    sigma = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    cv = sigma / mu if mu else float("nan")
    return MetricsReport(overall, list(per_class), mu, sigma, cv, list(missing))


def metrics_from_per_class(per_class) -> MetricsReport:
    """Summary statistics for an already-computed per-class accuracy row."""
    per_class = [float(a) for a in per_class]
    return _summarise(per_class, float("nan"))


class HeldOutLabels:
    """Target ground truth exposed only through scoring methods."""

    __slots__ = ("__truth", "num_classes")

    def __init__(self, labels, num_classes: int):
        self.__truth = np.asarray(labels, dtype=np.int64).copy()
        self.__truth.setflags(write=False)
        self.num_classes = num_classes

    def __len__(self) -> int:
        return len(self.__truth)

    def accuracy(self, predictions) -> float:
        return float((np.asarray(predictions) == self.__truth).mean())

    def report(self, predictions) -> MetricsReport:
        return compute_metrics(predictions, self.__truth, self.num_classes)

    def class_counts(self) -> list[int]:
        return np.bincount(self.__truth, minlength=self.num_classes).tolist()


@dataclass
class TargetSet:
    x: np.ndarray
    held_out: HeldOutLabels

    def __len__(self) -> int:
        return self.x.shape[0]


def pseudo_label_accuracy(label_bank, ground_truth) -> float:
    """Fraction of hard pseudo-labels equal to the held-out truth.

    ``ground_truth`` may be a :class:`HeldOutLabels` or a plain label array.
    """
    hard = np.asarray(getattr(label_bank, "hard_labels", label_bank))
    if isinstance(ground_truth, HeldOutLabels):
        return ground_truth.accuracy(hard)
    truth = np.asarray(ground_truth)
    if truth.shape != hard.shape:
        raise ValueError("labels and ground truth must be aligned")
    return float((hard == truth).mean())


def _sample(rng, means, counts, scale, offsets=None):
    xs, ys = [], []
    for k, (mu, n) in enumerate(zip(means, counts)):
        s = scale[k] if np.ndim(scale) else scale
        centers = np.broadcast_to(mu, (n, mu.size))
        if offsets is not None:
            centers = centers + offsets[k][np.arange(n) % offsets.shape[1]]
        xs.append(centers + s * rng.standard_normal((n, mu.size)))
        ys.append(np.full(n, k, dtype=np.int64))
    return np.concatenate(xs), np.concatenate(ys)


def _generate(spec: GmmDomainSpec):
    src_rng, tgt_rng = (make_rng(s) for s in np.random.SeedSequence(spec.seed).generate_state(2))
    xs, ys = _sample(src_rng, spec.class_means, spec.source_counts, spec.cov_scale, spec.mode_offsets)
    t_scale = spec.cov_scale if spec.target_cov_scales is None else np.asarray(spec.target_cov_scales)
    xt, yt = _sample(tgt_rng, spec.class_means + spec.shifts, spec.target_counts, t_scale,
                     spec.mode_offsets)
    perm = tgt_rng.permutation(len(yt))
    return LabeledSet(xs, ys), xt[perm], yt[perm]


def generate_domain_pair(spec: GmmDomainSpec) -> tuple[LabeledSet, TargetSet]:
    """Sample a labeled source set and an unlabeled target set.

    Samples are class-blocked in the source and randomly permuted in the
    target. The two domains use independent streams derived from ``seed``.
    """
    source, xt, yt = _generate(spec)
    return source, TargetSet(xt, HeldOutLabels(yt, spec.K))


def labeled_target(spec: GmmDomainSpec) -> LabeledSet:
    """The target set of :func:`generate_domain_pair` with its labels attached.

    For exporting evaluation files only; the adaptation path takes a
    :class:`TargetSet` and never sees these labels.
    """
    _, xt, yt = _generate(spec)
    return LabeledSet(xt, yt)


def _orthogonal_means(rng, K: int, D: int, separation: float) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((D, D)))
    return separation * q[:, :K].T


def hard_truck_profile(seed: int = 0, K: int = 6, D: int = 16, n_per_class: int = 300,
                       separation: float = 4.0, shift: float = 0.8, hard_factor: float = 4.0,
                       hard_count_factor: float = 0.5, cov_scale: float = 0.7, modes: int = 2,
                       mode_spread: float = 1.0, rival_pull: float = 0.6) -> GmmDomainSpec:
    """Miniature of a benchmark with one badly transferring class.

    Class means are mutually orthogonal at distance ``separation`` from the
    origin, and every class is a mixture of ``modes`` sub-clusters offset by
    ``mode_spread`` around its mean. Each class drifts by ``shift`` in a
    random direction between domains. The last class is the hard one: it
    drifts ``hard_factor`` times as far, partly towards class 0
    (``rival_pull`` in [0, 1] blends the random direction with the direction
    to that rival), and has ``hard_count_factor`` times as many target samples.
    """
    if not 0.0 <= rival_pull <= 1.0:
        raise ValueError("rival_pull must lie in [0, 1]")
    if modes < 1:
        raise ValueError("modes must be at least 1")
    rng = make_rng(seed)
    hard, rival = K - 1, 0
    means = _orthogonal_means(rng, K, D, separation)
    dirs = rng.standard_normal((K, D))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    to_rival = means[rival] - means[hard]
    to_rival /= np.linalg.norm(to_rival)
    pulled = rival_pull * to_rival + (1.0 - rival_pull) * dirs[hard]
    dirs[hard] = pulled / np.linalg.norm(pulled)
    mags = np.full(K, shift)
    mags[hard] *= hard_factor
    offsets = rng.standard_normal((K, modes, D))
    offsets /= np.linalg.norm(offsets, axis=2, keepdims=True)
    offsets *= mode_spread
    offsets -= offsets.mean(axis=1, keepdims=True)  # class mean stays at the mixture centre
    target_counts = [n_per_class] * K
    target_counts[hard] = max(1, int(round(n_per_class * hard_count_factor)))
    return GmmDomainSpec(
        class_means=means,
        shifts=dirs * mags[:, None],
        source_counts=[n_per_class] * K,
        target_counts=target_counts,
        cov_scale=cov_scale,
        seed=seed,
        mode_offsets=offsets if modes > 1 else None,
    )


def separable_profile(seed: int = 0, K: int = 3, D: int = 8, n_per_class: int = 60,
                      separation: float = 10.0, cov_scale: float = 0.05) -> GmmDomainSpec:
    """Tight, far-apart clusters with no domain shift at all."""
    rng = make_rng(seed)
    return GmmDomainSpec(
        class_means=_orthogonal_means(rng, K, D, separation),
        shifts=np.zeros((K, D)),
        source_counts=[n_per_class] * K,
        target_counts=[n_per_class] * K,
        cov_scale=cov_scale,
        seed=seed,
    )
