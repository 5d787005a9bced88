"""Reconstructing inputs from embeddings.

Vector encoders are inverted in a single stage: start from small noise and
descend the cosine distance to the target embedding. Grid encoders use the
multi-scale schedule with jitter, total variation and periodic blurring;
here a freshly initialised 16x16 encoder stands in for a trained one.

    python demos/04_feature_inversion.py
"""

import numpy as np

from hypersolid import model
from hypersolid.model import EncoderConfig
from hypersolid.topology import InversionConfig, invert, total_variation

rng = np.random.default_rng(0)

params = model.init(EncoderConfig(64, [256, 256], 64), seed=0)
checksum = params.checksum()
for k in range(3):
    x0 = rng.standard_normal(64)
    target = model.forward(params, x0[None])[0]
    res = invert(params, target, (64,), InversionConfig(tol=1e-4), seed=k)
    steps = res.scale_distances[-1][1]
    cos_x = float(res.x @ x0 / np.linalg.norm(res.x) / np.linalg.norm(x0))
    print(f"target {k}: distance {res.distance:.2e} after {steps} steps, cos(x, x0) {cos_x:+.3f}")
print("encoder untouched:", params.checksum() == checksum)

# Inputs are not identifiable from a cosine target alone, so x differs from x0
# even when the embedding matches.
#
# The grid schedule optimises under random shifts of the canvas. A plain MLP
# has no translation structure, so no single canvas fits every shift and the
# distance stays far above the vector case; TV then trades fit for smoothness.
grid = model.init(EncoderConfig(256, [128], 32), seed=1)
x0 = rng.standard_normal((16, 16))
target = model.forward(grid, x0.reshape(1, -1))[0]
for tv in (0.0, 0.01):
    cfg = InversionConfig(scales=[0.25, 0.5, 1.0], steps_per_scale=300, tv_weight=tv)
    res = invert(grid, target, (16, 16), cfg, seed=0)
    trail = ", ".join(f"{s:.2f}:{d:.3f}" for s, _, d in res.scale_distances)
    print(f"grid, tv weight {tv}: per-scale distance {trail}; TV of result {float(total_variation(res.x)):.2f}")
