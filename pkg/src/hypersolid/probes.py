"""Frozen-representation probes: cosine k-NN vote and a softmax linear classifier."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ndtensor as nd
from .errors import ArgumentError
from .optim import AdamW
from .views import EmbeddingSet


@dataclass
class ProbeResult:
    probe: str
    top1: float
    top5: float
    param: int  # k for knn, epochs for linear
    n_train: int
    n_test: int


def _require_labels(*sets: EmbeddingSet) -> None:
    for s in sets:
        if s.labels is None:
            raise ArgumentError("probe requires labelled embeddings")


def _normalized(x: np.ndarray) -> np.ndarray:
    return np.asarray(nd.rowwise_l2_normalize(np.asarray(x, dtype=np.float64)))


def knn_rank_classes(sims: np.ndarray, train_labels: np.ndarray, k: int,
                     n_classes: int) -> np.ndarray:
    """Rank classes for each query row by uniform k-NN vote.

    Ties in vote count break on the summed similarity of the voters, then on
    the lower class id. Returns an array of shape (n_queries, n_classes).
    """
    # stable sort on -sim keeps the lower train index first among equal similarities
    nn = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    nn_sims = np.take_along_axis(sims, nn, axis=1)
    nn_labels = train_labels[nn]
    q = len(sims)
    votes = np.zeros((q, n_classes))
    mass = np.zeros((q, n_classes))
    rows = np.repeat(np.arange(q), k)
    np.add.at(votes, (rows, nn_labels.ravel()), 1.0)
    np.add.at(mass, (rows, nn_labels.ravel()), nn_sims.ravel())
    cls = np.broadcast_to(np.arange(n_classes), (q, n_classes))
    # lexsort: last key is primary
    return np.lexsort((cls, -mass, -votes), axis=-1)


def knn_probe(train: EmbeddingSet, test: EmbeddingSet, k: int = 5,
              chunk: int = 1024) -> ProbeResult:
    _require_labels(train, test)
    if not 1 <= k <= len(train):
        raise ArgumentError(f"k must lie in [1, {len(train)}]")
    n_classes = int(max(train.labels.max(), test.labels.max())) + 1
    a = _normalized(train.vectors)
    b = _normalized(test.vectors)
    hit1 = hit5 = 0
    for i in range(0, len(b), chunk):
        ranks = knn_rank_classes(b[i:i + chunk] @ a.T, train.labels, k, n_classes)
        truth = test.labels[i:i + chunk]
        hit1 += int(np.sum(ranks[:, 0] == truth))
        hit5 += int(np.sum(np.any(ranks[:, :5] == truth[:, None], axis=1)))
    n = len(test)
    return ProbeResult("knn", hit1 / n, hit5 / n, k, len(train), n)


def linear_probe(train: EmbeddingSet, test: EmbeddingSet, epochs: int = 200,
                 lr: float = 1e-2, weight_decay: float = 0.0, seed: int = 0) -> ProbeResult:
    """Multinomial logistic regression on raw embeddings, full-batch AdamW."""
    _require_labels(train, test)
    if len(np.unique(train.labels)) < 2:
        raise ArgumentError("linear probe needs at least two classes in the training set")
    n_classes = int(max(train.labels.max(), test.labels.max())) + 1
    x = np.asarray(train.vectors, dtype=np.float64)
    rng = np.random.default_rng(seed)
    w = 0.01 * rng.standard_normal((x.shape[1], n_classes))
    b = np.zeros(n_classes)
    opt = AdamW(lr=lr, weight_decay=weight_decay)
    state = opt.init([w, b])
    for _ in range(epochs):
        tape = nd.Tape()
        wv, bv = tape.variable(w), tape.variable(b)
        loss = nd.softmax_cross_entropy(nd.add(nd.matmul(x, wv), bv), train.labels)
        grads = tape.backward(loss)
        (w, b), state = opt.step([w, b], [grads[wv], grads[bv]], state)
    logits = np.asarray(test.vectors, dtype=np.float64) @ w + b
    order = np.argsort(-logits, axis=1, kind="stable")
    truth = test.labels
    top1 = float(np.mean(order[:, 0] == truth))
    top5 = float(np.mean(np.any(order[:, :5] == truth[:, None], axis=1)))
    return ProbeResult("linear", top1, top5, epochs, len(train), len(test))


def append_probe_results(path, results: list[ProbeResult]) -> None:
    """Append rows ``probe, k_or_epochs, top1, top5`` (header written once)."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["probe", "k_or_epochs", "top1", "top5"])
        for r in results:
            w.writerow([r.probe, r.param, repr(r.top1), repr(r.top5)])
