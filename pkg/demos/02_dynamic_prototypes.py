"""
Dynamic soft labels and the EMA prototype bank
==============================================

Within an epoch the multicentric bank drifts towards each minibatch by an
exponential moving average, and the soft labels used by the symmetric
cross-entropy term are read off the current bank.
"""

import numpy as np

from bmd.dynamic import DynamicPrototypeState, batch_prototype_estimate, dynamic_soft_labels, ema_update
from bmd.labeling import PrototypeBank

# two classes, one prototype each, pointing along +x and -x
bank = PrototypeBank.from_centroids(np.array([[[1.0, 0.0]], [[-1.0, 0.0]]]))
x = np.array([[1.0, 0.0], [0.6, 0.8]])

# %%
# Soft labels are a softmax of cosine similarities. With unit-norm features
# the logits live in [-1, 1], so at temperature 1 the labels stay soft;
# a small temperature sharpens them.
for tau in (1.0, 0.25, 0.05):
    q = dynamic_soft_labels(x, DynamicPrototypeState(bank, temperature=tau))
    print(f"tau={tau:<5} q={np.round(q, 4).tolist()}")

# %%
# EMA: c <- lam c + (1 - lam) c_hat. With lam = 0.9999 the bank barely moves
# over one epoch of a few dozen steps, which is the point: it is a slow
# average, reseeded from the static prototypes at every epoch.
rng = np.random.default_rng(0)
batch = np.column_stack([np.ones(64), 0.5 * rng.standard_normal(64)])
for lam in (0.9, 0.9999):
    state = DynamicPrototypeState.from_bank(bank, momentum=lam)
    for _ in range(50):
        state = ema_update(state, batch_prototype_estimate(batch, state))
    moved = np.linalg.norm(state.bank.prototypes - bank.prototypes)
    print(f"lam={lam}: moved {moved:.4f} after {state.updates_applied} updates")
