"""Class-balanced multicentric dynamic prototype pseudo-labeling for
source-free domain adaptation, on numpy."""

from .benchmark import (
    GmmDomainSpec,
    HeldOutLabels,
    MetricsReport,
    compute_metrics,
    generate_domain_pair,
    hard_truck_profile,
    pseudo_label_accuracy,
)
from .clustering import KMeansConfig, KMeansResult, kmeans
from .dynamic import DynamicPrototypeState, batch_prototype_estimate, dynamic_soft_labels, ema_update
from .engine import AdaptationConfig, SourceConfig, ablation_suite, adapt, train_source
from .labeling import (
    LabelBank,
    PrototypeBank,
    SamplingSpec,
    bmp_prototypes,
    bp_prototypes,
    compute_M,
    naive_labels,
    top_m_select,
)
from .objectives import LossWeights, SoftmaxLinearModel, forward

__version__ = "0.1.0"

__all__ = [
    "GmmDomainSpec",
    "HeldOutLabels",
    "MetricsReport",
    "compute_metrics",
    "generate_domain_pair",
    "hard_truck_profile",
    "pseudo_label_accuracy",
    "LabelBank",
    "PrototypeBank",
    "SamplingSpec",
    "bmp_prototypes",
    "bp_prototypes",
    "compute_M",
    "naive_labels",
    "top_m_select",
    "KMeansConfig",
    "KMeansResult",
    "kmeans",
    "DynamicPrototypeState",
    "batch_prototype_estimate",
    "dynamic_soft_labels",
    "ema_update",
    "AdaptationConfig",
    "SourceConfig",
    "ablation_suite",
    "adapt",
    "train_source",
    "LossWeights",
    "SoftmaxLinearModel",
    "forward",
]
