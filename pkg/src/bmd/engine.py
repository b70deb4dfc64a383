"""Source training, the self-training adaptation loop and strategy ablations.

Schedule of :func:`adapt`, per epoch:

1. full pass over the target set to get features and probabilities;
2. static pseudo-labels from the configured strategy;
3. for ``bmd``, a fresh EMA prototype bank seeded from the static BMP bank;
4. shuffled minibatches: dynamic soft labels (``bmd`` only), gradient of
   ``alpha * CE + beta * SCE``, one SGD step, one EMA step.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .benchmark import (
    GmmDomainSpec,
    LabeledSet,
    MetricsReport,
    TargetSet,
    generate_domain_pair,
)
from .clustering import KMeansConfig
from .dynamic import (
    DEFAULT_MOMENTUM,
    DynamicPrototypeState,
    batch_prototype_estimate,
    dynamic_soft_labels,
    ema_update,
)
from .labeling import (
    LabelBank,
    PrototypeBank,
    SamplingSpec,
    bmp_prototypes,
    bp_prototypes,
    mono_prototypes,
    mono_refine,
    naive_labels,
    nearest_prototype_labels,
)
from .numerics import as_matrix, make_rng
from .objectives import (
    LossWeights,
    SGDMomentum,
    SoftmaxLinearModel,
    forward,
    gradients,
    source_gradients,
)

__all__ = [
    "STRATEGIES",
    "SourceConfig",
    "AdaptationConfig",
    "RunRecord",
    "AblationRow",
    "AblationTable",
    "train_source",
    "static_labels",
    "adapt",
    "run_experiment",
    "ablation_suite",
    "BENCHMARK_ADAPTATION",
    "BENCHMARK_SOURCE",
]

log = logging.getLogger(__name__)

STRATEGIES = ("naive", "mono", "bp", "bmp", "bmd")


@dataclass(frozen=True)
class SourceConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    label_smoothing_eps: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class AdaptationConfig:
    strategy: str = "bmd"
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-2
    momentum: float = 0.9
    r: float = 3.0
    S: int = 4
    refinement_rounds: int = 2
    loss_weights: LossWeights = LossWeights(alpha=2.0, beta=0.5)
    ema_momentum: float = DEFAULT_MOMENTUM
    dynamic_temperature: float = 1.0
    seed: int = 0
    label_smoothing_eps: float = 0.1
    kmeans_init: str = "kmeans_plus_plus"

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; valid: {', '.join(STRATEGIES)}")
        if self.strategy in ("bmp", "bmd") and self.S < 1:
            raise ValueError(f"strategy {self.strategy} needs S >= 1")
        if self.epochs < 0 or self.batch_size < 1 or self.refinement_rounds < 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and refinement_rounds >= 0 required")
        if not 0.0 < self.ema_momentum < 1.0:
            raise ValueError("ema_momentum must lie in (0, 1)")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")

    @property
    def effective_weights(self) -> LossWeights:
        """Strategies other than ``bmd`` have no dynamic term."""
        if self.strategy == "bmd":
            return self.loss_weights
        return LossWeights(alpha=self.loss_weights.alpha, beta=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_weights"] = {"alpha": self.loss_weights.alpha, "beta": self.loss_weights.beta}
        return d


# Settings used for the hard-truck ablation at desk scale: a shorter schedule
# than the defaults and a sharp dynamic soft-label temperature.
BENCHMARK_SOURCE = SourceConfig(epochs=20)
BENCHMARK_ADAPTATION = AdaptationConfig(epochs=10, learning_rate=3e-3, dynamic_temperature=0.05)


@dataclass
class RunRecord:
    config: dict
    pseudo_label_acc: list[float] = field(default_factory=list)
    predicted_acc: list[float] = field(default_factory=list)
    # per-class pseudo-label accuracy at the start of every epoch
    pseudo_label_per_class: list[list[float]] = field(default_factory=list)
    initial: MetricsReport | None = None
    final: MetricsReport | None = None
    wall_time: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "config": self.config,
            "pseudo_label_acc": list(self.pseudo_label_acc),
            "predicted_acc": list(self.predicted_acc),
            "pseudo_label_per_class": [list(r) for r in self.pseudo_label_per_class],
            "initial": self.initial.as_dict() if self.initial else None,
            "final": self.final.as_dict() if self.final else None,
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


def _batches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _model_params(model: SoftmaxLinearModel, classifier: bool) -> dict[str, np.ndarray]:
    params = {"W": model.extractor_weights, "b": model.extractor_bias}
    if classifier:
        params.update(V=model.classifier_weights, c=model.classifier_bias)
    return params


def train_source(model: SoftmaxLinearModel, source: LabeledSet, config: SourceConfig = SourceConfig()
                 ) -> SoftmaxLinearModel:
    """Supervised label-smoothed training on the source set.

    Returns a trained copy whose classifier is marked frozen.
    """
    x = as_matrix(source.x, "source.x")
    y = np.asarray(source.y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty source data")
    model = model.copy()
    opt = SGDMomentum(lr=config.learning_rate, momentum=config.momentum)
    rng = make_rng(config.seed)
    params = _model_params(model, classifier=True)
    for _ in range(config.epochs):
        for idx in _batches(len(y), config.batch_size, rng):
            dW, db, dV, dc = source_gradients(model, x[idx], y[idx], config.label_smoothing_eps)
            opt.step(params, {"W": dW, "b": db, "V": dV, "c": dc})
    model.classifier_frozen = True
    return model


def static_labels(features, probs, config: AdaptationConfig) -> tuple[PrototypeBank | None, LabelBank]:
    """Epoch-level pseudo-labels for the configured strategy."""
    K = probs.shape[1]
    rounds = config.refinement_rounds
    if config.strategy == "naive":
        return None, naive_labels(probs)
    if config.strategy == "mono":
        bank = mono_prototypes(features, probs)
        labels = nearest_prototype_labels(features, bank)
        if rounds >= 1:
            bank, labels = mono_refine(features, labels, rounds, num_classes=K, initial=bank)
        return bank, labels
    spec = SamplingSpec(num_classes=K, n_t=features.shape[0], ratio=config.r)
    if config.strategy == "bp":
        return bp_prototypes(features, probs, spec, rounds)
    kcfg = KMeansConfig(num_clusters=config.S, seed=config.seed, init=config.kmeans_init)
    return bmp_prototypes(features, probs, spec, config.S, kcfg, rounds)


def adapt(model: SoftmaxLinearModel, target, config: AdaptationConfig
          ) -> tuple[SoftmaxLinearModel, RunRecord]:
    """Self-train the extractor on unlabeled target data.

    ``target`` is either a raw (n, D) array or a :class:`TargetSet`; in the
    latter case its held-out labels are used for the run record only.
    """
    config.validate()
    if isinstance(target, TargetSet):
        x, held_out = as_matrix(target.x, "target.x"), target.held_out
    else:
        x, held_out = as_matrix(target, "target"), None
    t0 = time.perf_counter()
    model = model.copy()
    frozen = (model.classifier_weights.copy(), model.classifier_bias.copy())
    weights = config.effective_weights
    opt = SGDMomentum(lr=config.learning_rate, momentum=config.momentum)
    params = _model_params(model, classifier=False)
    rng = make_rng(config.seed)
    record = RunRecord(config=config.to_dict())

    def predict():
        return np.argmax(forward(model, x)[1], axis=1)

    if held_out is not None:
        record.initial = held_out.report(predict())

    for epoch in range(config.epochs):
        feats, probs = forward(model, x)
        bank, labels = static_labels(feats, probs, config)
        if held_out is not None:
            rep = held_out.report(labels.hard_labels)
            record.pseudo_label_acc.append(rep.overall_accuracy)
            record.pseudo_label_per_class.append(rep.per_class)
        state = None
        if config.strategy == "bmd":
            state = DynamicPrototypeState.from_bank(bank, config.ema_momentum,
                                                    temperature=config.dynamic_temperature)
        hard = labels.hard_labels
        del feats, probs

        for idx in _batches(x.shape[0], config.batch_size, rng):
            xb = x[idx]
            q = None
            if state is not None:
                hb, _ = forward(model, xb)
                q = dynamic_soft_labels(hb, state)
            dW, db = gradients(model, xb, hard[idx], q, weights)
            opt.step(params, {"W": dW, "b": db})
            if state is not None:
                state = ema_update(state, batch_prototype_estimate(hb, state))

        if held_out is not None:
            record.predicted_acc.append(held_out.accuracy(predict()))
        log.debug("epoch %d done", epoch)

    if held_out is not None:
        record.final = held_out.report(predict())
    assert np.array_equal(frozen[0], model.classifier_weights)
    assert np.array_equal(frozen[1], model.classifier_bias)
    record.wall_time = time.perf_counter() - t0
    return model, record


def run_experiment(spec: GmmDomainSpec, config: AdaptationConfig, source_config: SourceConfig,
                   model_dim: int = 16, activation: str = "tanh") -> tuple[SoftmaxLinearModel, RunRecord]:
    """Generate data, train the source model and adapt it; returns the adapted model."""
    source, target = generate_domain_pair(spec)
    model = SoftmaxLinearModel.init(spec.D, model_dim, spec.K, seed=source_config.seed, activation=activation)
    model = train_source(model, source, source_config)
    return adapt(model, target, config)


@dataclass
class AblationRow:
    strategy: str
    final_acc: list[float]
    final_cv: list[float]
    epoch0_pseudo_acc: list[float]
    source_acc: list[float]
    final_per_class: list[list[float]]
    epoch0_pseudo_per_class: list[list[float]]

    @staticmethod
    def _mean_std(v):
        a = np.asarray(v, dtype=np.float64)
        return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0

    def summary(self) -> dict:
        acc_mu, acc_sd = self._mean_std(self.final_acc)
        cv_mu, cv_sd = self._mean_std(self.final_cv)
        pl_mu, pl_sd = self._mean_std(self.epoch0_pseudo_acc) if self.epoch0_pseudo_acc else (float("nan"),) * 2
        return {
            "strategy": self.strategy,
            "seeds": len(self.final_acc),
            "acc_mean": acc_mu,
            "acc_std": acc_sd,
            "cv_mean": cv_mu,
            "cv_std": cv_sd,
            "epoch0_pseudo_acc_mean": pl_mu,
            "epoch0_pseudo_acc_std": pl_sd,
            "source_acc_mean": self._mean_std(self.source_acc)[0],
        }


@dataclass
class AblationTable:
    rows: list[AblationRow]
    seeds: list[int]

    def row(self, strategy: str) -> AblationRow:
        for r in self.rows:
            if r.strategy == strategy:
                return r
        raise KeyError(strategy)

    def summary(self) -> list[dict]:
        return [r.summary() for r in self.rows]


def _one_seed(spec_for_seed, seed, config_base, source_config, strategies, model_dim, activation):
    spec = spec_for_seed(seed)
    source, target = generate_domain_pair(spec)
    src_cfg = replace(source_config, seed=seed)
    model = SoftmaxLinearModel.init(spec.D, model_dim, spec.K, seed=seed, activation=activation)
    model = train_source(model, source, src_cfg)
    out = []
    for strategy in strategies:
        cfg = replace(config_base, strategy=strategy, seed=seed)
        _, rec = adapt(model, target, cfg)
        out.append(rec)
    return out


def ablation_suite(spec_for_seed, config_base: AdaptationConfig, seeds=range(5),
                   strategies=STRATEGIES, source_config: SourceConfig = SourceConfig(),
                   model_dim: int = 16, workers: int = 1, activation: str = "tanh") -> AblationTable:
    """Run every strategy from the same source model for each seed.

    ``spec_for_seed`` maps a seed to a :class:`GmmDomainSpec` (or is a fixed
    spec). Results are merged in seed order regardless of ``workers``.
    """
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}; valid: {', '.join(STRATEGIES)}")
    if isinstance(spec_for_seed, GmmDomainSpec):
        fixed = spec_for_seed
        spec_for_seed = lambda seed: replace(fixed, seed=seed)  # noqa: E731
    seeds = list(seeds)
    args = [(spec_for_seed, s, config_base, source_config, strategies, model_dim, activation)
            for s in seeds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_seed = list(pool.map(lambda a: _one_seed(*a), args))
    else:
        per_seed = [_one_seed(*a) for a in args]

    rows = []
    for i, strategy in enumerate(strategies):
        recs = [runs[i] for runs in per_seed]
        rows.append(AblationRow(
            strategy=strategy,
            final_acc=[r.final.overall_accuracy for r in recs],
            final_cv=[r.final.cv for r in recs],
            epoch0_pseudo_acc=[r.pseudo_label_acc[0] for r in recs if r.pseudo_label_acc],
            source_acc=[r.initial.overall_accuracy for r in recs],
            final_per_class=[r.final.per_class for r in recs],
            epoch0_pseudo_per_class=[r.pseudo_label_per_class[0] for r in recs if r.pseudo_label_per_class],
        ))
    return AblationTable(rows=rows, seeds=seeds)
