"""Latent energy along straight walks between embeddings.

After training, walk linearly from one embedding to another and measure how
far each intermediate point is from the nearest real embedding. Walks
between samples of the same class stay close to data; walks across classes
climb a ridge.

    python demos/03_energy_walks.py [epochs]
"""

import sys

import numpy as np

from hypersolid import model
from hypersolid.model import EncoderConfig
from hypersolid.topology import energy_walk, walk_pairs
from hypersolid.trainer import TrainConfig, train
from hypersolid.views import EmbeddingSet, synthetic_clusters

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 5
source = synthetic_clusters()
params, _ = train(source, TrainConfig(epochs=epochs, probe_every=0, encoder=EncoderConfig(64, [256, 256], 64)))

heldout = synthetic_clusters(size=2048, sample_seed=1)
emb = EmbeddingSet(model.encode(params, heldout.data), heldout.labels)
pairs = walk_pairs(emb.labels, 500, 500, seed=0)
profile = energy_walk(emb, pairs, steps=20)

print("   t   positive          negative")
for t, pm, ps, nm, ns in zip(profile.t, profile.pos_mean, profile.pos_std, profile.neg_mean, profile.neg_std):
    bar = "#" * int(round(nm * 100))
    print(f"{t:4.2f}  {pm:.4f}+-{ps:.4f}  {nm:.4f}+-{ns:.4f}  {bar}")

peak = profile.peak_energy()
same = profile.same_class
print(f"mean peak energy: positive {peak[same].mean():.4f}, negative {peak[~same].mean():.4f}")
print("ridge between classes:", bool(np.mean(peak[~same]) > np.mean(peak[same])))
