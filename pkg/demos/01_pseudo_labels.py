"""
Static pseudo-labels on a two-class toy
=======================================

Class A lives in two lobes (0 and 100 degrees), class B in one lobe at 60
degrees, between A's lobes. A single prototype per class lands between A's
lobes, right on top of B, so the 100-degree lobe is labeled B. Two prototypes
per class fix that.
"""

import numpy as np

from bmd.clustering import KMeansConfig
from bmd.labeling import (
    SamplingSpec,
    bmp_prototypes,
    bp_prototypes,
    mono_prototypes,
    naive_labels,
    nearest_prototype_labels,
)

rng = np.random.default_rng(0)


def lobe(deg, n, jitter=3.0):
    a = np.deg2rad(deg + jitter * rng.standard_normal(n))
    return np.stack([np.cos(a), np.sin(a)], axis=1)


features = np.vstack([lobe(0, 30), lobe(100, 15), lobe(60, 45)])
truth = np.array([0] * 45 + [1] * 45)

# a classifier that is confident on the 0-degree lobe and confused elsewhere
probs = np.empty((90, 2))
probs[:30] = [0.9, 0.1]
probs[30:45] = [0.45, 0.55]
probs[45:] = [0.2, 0.8]


def acc(labels):
    return (labels.hard_labels == truth).mean()


print("naive argmax     ", acc(naive_labels(probs)))
mono = mono_prototypes(features, probs)
print("mono prototypes  ", acc(nearest_prototype_labels(features, mono)))

# top-M sampling: M = floor(n / (r K)) instances per class
spec = SamplingSpec(num_classes=2, n_t=90, ratio=1.0)
_, bp = bp_prototypes(features, probs, spec)
print("BP  (S=1)        ", acc(bp))

bank, bmp = bmp_prototypes(features, probs, spec, S=2, kcfg=KMeansConfig(num_clusters=2, seed=0))
print("BMP (S=2)        ", acc(bmp))

# prototype directions in degrees, per class
angles = np.rad2deg(np.arctan2(bank.prototypes[..., 1], bank.prototypes[..., 0]))
print("BMP prototypes (deg):", np.round(angles, 1).tolist())

# %%
# With S=1, BMP is BP exactly: same selection, same prototypes, same labels.
_, bmp1 = bmp_prototypes(features, probs, spec, S=1)
print("BMP S=1 == BP:", np.array_equal(bmp1.hard_labels, bp.hard_labels))
