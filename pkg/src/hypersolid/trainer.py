"""Training loop: views -> shared encoder -> loss -> AdamW, with per-epoch logs."""

from __future__ import annotations

import csv
import logging
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import model
from . import ndtensor as nd
from .errors import ArgumentError, NumericError
from .loss import LossConfig, hypersolid_loss
from .model import EncoderConfig, Parameters
from .optim import AdamW, optimizer_step  # noqa: F401  (re-exported)
from .probes import knn_probe, linear_probe
from .views import EmbeddingSet, SampleSource, ViewConfig, make_views

log = logging.getLogger(__name__)

EPOCH_COLUMNS = ["epoch", "align", "repulse", "norm", "total", "knn_acc", "linear_acc", "seconds"]


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    batch_size: int = 128
    epochs: int = 20
    seed: int = 0
    probe_every: int = 5
    knn_k: int = 5
    probe_epochs: int = 200
    precision: str = "f64"
    loss: LossConfig = field(default_factory=LossConfig)
    views: ViewConfig = field(default_factory=ViewConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        if self.lr < 0:
            raise ArgumentError("lr must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ArgumentError("batch_size and epochs must be >= 1")
        if self.precision not in ("f32", "f64"):
            raise ArgumentError("precision must be 'f32' or 'f64'")

    def optimizer(self) -> AdamW:
        return AdamW(self.lr, self.weight_decay, self.beta1, self.beta2, self.eps_opt)


@dataclass
class EpochLog:
    epoch: int
    alignment: float
    repulsion: float
    normalization: float
    total: float
    seconds: float
    knn_acc: float | None = None
    linear_acc: float | None = None


BatchHook = Callable[[int, int, np.ndarray, dict], None]


def loss_and_grads(params: Parameters, batch: np.ndarray, cfg: LossConfig,
                   dtype=np.float64):
    """Loss breakdown (floats), gradients per parameter array, and the feats."""
    tape = nd.Tape(dtype)
    pvars = [tape.variable(a) for a in params.arrays()]
    x = tape.constant(batch)
    feats = model.forward(pvars, x)
    br = hypersolid_loss(feats, cfg)
    grads = tape.backward(br.total)
    return br.values(), [grads[p] for p in pvars], feats.value


def evaluate(params: Parameters, train: SampleSource, test: SampleSource,
             k: int = 5, probe_epochs: int = 200, seed: int = 0) -> tuple[float, float]:
    """KNN and linear top-1 on clean (un-augmented) inputs."""
    tr = EmbeddingSet(model.encode(params, train.data), train.labels)
    te = EmbeddingSet(model.encode(params, test.data), test.labels)
    knn = knn_probe(tr, te, k=min(k, len(tr)))
    lin = linear_probe(tr, te, epochs=probe_epochs, seed=seed)
    return knn.top1, lin.top1


def train(source: SampleSource, cfg: TrainConfig, *, eval_source: SampleSource | None = None,
          out_dir=None, on_batch: BatchHook | None = None,
          init_params: Parameters | None = None) -> tuple[Parameters, list[EpochLog]]:
    """Run ``cfg.epochs`` passes over ``source``.

    Every epoch reshuffles the sample order with the seeded generator, so the
    whole run is a deterministic function of ``cfg`` and the data. Probes run
    every ``cfg.probe_every`` epochs (0 disables them) against ``eval_source``
    or, when absent, a fixed 80/20 split of ``source``.

    Raises :class:`NumericError` on a non-finite loss or gradient; the last
    good parameters are written first and their path is in the message.
    """
    if source.size == 0:
        raise ArgumentError("source is empty")
    if cfg.encoder.input_dim != source.dimension:
        raise ArgumentError(f"encoder input_dim {cfg.encoder.input_dim} != source dimension {source.dimension}")
    dtype = np.float32 if cfg.precision == "f32" else np.float64
    params = init_params.copy() if init_params is not None else model.init(cfg.encoder, cfg.seed)
    opt = cfg.optimizer()
    state = opt.init(params.arrays())
    rng = np.random.default_rng(cfg.seed)
    probe_split = None
    if cfg.probe_every and source.labels is not None:
        if eval_source is not None:
            probe_split = (source, eval_source)
        else:
            probe_split = source.split(0.2, cfg.seed)

    logs: list[EpochLog] = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(source.size)
        sums = np.zeros(4)
        n_batches = 0
        for step, start in enumerate(range(0, source.size, cfg.batch_size)):
            batch = make_views(source, order[start:start + cfg.batch_size], cfg.views, rng)
            try:
                vals, grads, feats = loss_and_grads(params, batch.astype(dtype), cfg.loss, dtype)
                bad = not np.isfinite(vals["total"]) or not all(np.all(np.isfinite(g)) for g in grads)
                cause = "non-finite loss or gradient"
            except NumericError as exc:
                bad, cause = True, str(exc)
            if bad:
                path = _dump_last_good(params, out_dir)
                raise NumericError(f"{cause} at epoch {epoch} step {step}; last good checkpoint: {path}")
            if on_batch is not None:
                on_batch(epoch, step, feats, vals)
            arrays, state = opt.step(params.arrays(), grads, state)
            params = params.replace([a.astype(np.float64) for a in arrays])
            sums += [vals["alignment"], vals["repulsion"], vals["normalization"], vals["total"]]
            n_batches += 1
        means = sums / n_batches
        entry = EpochLog(epoch, *map(float, means), seconds=0.0)
        if probe_split is not None and epoch % cfg.probe_every == 0:
            entry.knn_acc, entry.linear_acc = evaluate(params, *probe_split, k=cfg.knn_k,
                                                       probe_epochs=cfg.probe_epochs, seed=cfg.seed)
        entry.seconds = time.perf_counter() - t0
        log.info("epoch %d total=%.6f align=%.6f repulse=%.6f knn=%s", epoch, entry.total,
                 entry.alignment, entry.repulsion, entry.knn_acc)
        logs.append(entry)
    return params, logs


def _dump_last_good(params: Parameters, out_dir) -> Path:
    target = Path(out_dir) if out_dir is not None else Path(tempfile.mkdtemp(prefix="hypersolid-"))
    target.mkdir(parents=True, exist_ok=True)
    path = target / "last_good.hsck"
    model.save_checkpoint(path, params)
    return path


def write_epochs_csv(path, logs: list[EpochLog], wallclock: bool = False) -> None:
    """Write the per-epoch table.

    ``seconds`` is left empty unless ``wallclock`` is set, so that reruns
    produce byte-identical files.
    """
    fmt = lambda x: "" if x is None else repr(float(x))  # noqa: E731
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPOCH_COLUMNS)
        for e in logs:
            w.writerow([e.epoch, fmt(e.alignment), fmt(e.repulsion), fmt(e.normalization),
                        fmt(e.total), fmt(e.knn_acc), fmt(e.linear_acc),
                        fmt(e.seconds) if wallclock else ""])
