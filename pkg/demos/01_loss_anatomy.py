"""Anatomy of the loss on hand-sized batches.

Walks through the three terms on inputs small enough to check by hand, then
shows the collapsed-batch closed form and the Markov collision bound.

    python demos/01_loss_anatomy.py
"""

import math

import numpy as np

from hypersolid import ndtensor as nd
from hypersolid.loss import (
    LossConfig, alignment_loss, collision_fraction, hypersolid_loss, markov_collision_bound,
    normalization_loss, repulsion_loss,
)

# Repulsion only fires above the threshold. Two orthogonal views cost nothing...
print("orthogonal pair      ", float(repulsion_loss(np.eye(2)[None], alpha=0.9)))
# ...two identical views cost 1 per off-diagonal entry, averaged over all four entries.
print("identical pair       ", float(repulsion_loss(np.array([[[1.0, 0.0], [1.0, 0.0]]]), alpha=0.9)))

s = math.sqrt(0.5)
three = np.array([[[1.0, 0.0], [0.0, 1.0], [s, s]]])
print("e1, e2, diagonal a=.5", float(repulsion_loss(three, alpha=0.5)), "(expect 0.18409)")

# Alignment pulls each view toward the max-pooled target of its image.
two_views = np.array([[[1.0, 0.0], [0.0, 1.0]]])
print("alignment (1,0),(0,1)", float(alignment_loss(two_views)), "(expect 1 - 1/sqrt 2)")

# The norm penalty uses the mean of the row norms, so {2, 0} costs nothing.
print("norm penalty {2, 0}  ", float(normalization_loss(np.array([[[2.0, 0.0], [0.0, 0.0]]]), 1.0)))

# A fully collapsed batch: alignment is perfect, repulsion is maximal.
b, v = 4, 8
m = b * v
collapsed = np.tile([0.6, 0.8], (b, v, 1))
br = hypersolid_loss(collapsed, LossConfig(norm_lambda=0.0)).values()
print(f"collapsed batch M={m}: total {br['total']:.6f} vs (M-1)/M = {(m - 1) / m:.6f}")

# Gradients. The target is stop-gradiented, and pairs below alpha get exactly zero.
rng = np.random.default_rng(0)
feats = rng.standard_normal((2, 3, 4))
tape = nd.Tape()
x = tape.variable(feats)
g = tape.backward(repulsion_loss(x, alpha=0.9))[x]
print("repulsion gradient on a spread-out batch is all zero:", bool(np.all(g == 0)))

# Markov: the share of pairs above alpha + eps is bounded by the repulsion value.
alpha = 0.9
near = rng.standard_normal((1, 1, 8)) + 0.15 * rng.standard_normal((4, 4, 8))
rep = float(repulsion_loss(near, alpha))
for eps in (0.01, 0.02, 0.05):
    frac = collision_fraction(near, alpha + eps)
    bound = markov_collision_bound(rep, alpha, eps, near.shape[0] * near.shape[1])
    print(f"eps={eps:.2f}: collisions {frac:.3f} <= bound {bound:.3f}")
