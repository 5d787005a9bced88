"""Why the repulsion term is needed.

Trains the same encoder twice on Gaussian clusters, once with the full loss
and once with alignment alone, and compares the geometry of the held-out
embeddings. Alignment alone collapses the embeddings to a near-single
direction. The full loss keeps them spread out with pairwise angles well
above arccos(alpha).

    python demos/02_collapse_ablation.py [epochs]
"""

import sys
import time

from hypersolid import model
from hypersolid.geometry import geometry_report
from hypersolid.loss import LossConfig
from hypersolid.model import EncoderConfig
from hypersolid.probes import knn_probe
from hypersolid.trainer import TrainConfig, train
from hypersolid.views import EmbeddingSet, synthetic_clusters

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10
source = synthetic_clusters()
heldout = synthetic_clusters(size=2048, sample_seed=1)


def run(name, loss):
    cfg = TrainConfig(epochs=epochs, probe_every=0, encoder=EncoderConfig(64, [256, 256], 64), loss=loss)
    t0 = time.perf_counter()
    params, logs = train(source, cfg)
    tr = EmbeddingSet(model.encode(params, source.data), source.labels)
    te = EmbeddingSet(model.encode(params, heldout.data), heldout.labels)
    report = geometry_report(te, pair_samples=20000, name=name)
    knn = knn_probe(tr, te, k=5).top1
    print(f"{name:15s} loss {logs[-1].total:.4f}  rank {report.embedding_rank:6.2f}  "
          f"cvn {report.cvn:.4f}  mpa {report.mpa_degrees:6.2f} deg  d' {report.d_prime:.3f}  "
          f"knn {knn:.3f}  ({time.perf_counter() - t0:.0f}s)")


print(f"{epochs} epochs, 4096 samples, 8 classes, 64-d projector")
run("full loss", LossConfig())
run("alignment only", LossConfig(use_repulsion=False))
