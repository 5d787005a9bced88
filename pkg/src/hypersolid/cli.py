"""Command-line entry point.

    hypersolid train --epochs 20 --seed 7 --out-dir runs/a
    hypersolid export-embeddings --checkpoint runs/a/checkpoint.hsck --out-dir runs/a
    hypersolid analyze --embeddings runs/a/embeddings.hseb --labels runs/a/labels.txt

Exit codes: 0 ok, 2 config error, 3 data or format error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, config, geometry, model, probes, topology, trainer
from .errors import ArgumentError, ConfigError, DimensionError, FormatError, NumericError
from .views import load_embeddings, load_labels, read_hseb, save_embeddings, save_labels

log = logging.getLogger("hypersolid")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class Run:
    """Resolved config, output directory and the manifest being written."""

    def __init__(self, command: str, cfg: dict, out_dir: Path, args: dict):
        self.command = command
        self.cfg = cfg
        self.out_dir = out_dir
        self.args = args
        self.artifacts: list[str] = []

    def path(self, name: str) -> Path:
        if name not in self.artifacts:
            self.artifacts.append(name)
        return self.out_dir / name

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / f"{self.command}.manifest.json"

    def write_manifest(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        doc = {
            "command": self.command,
            "tool_version": __version__,
            "seed": self.cfg["seed"],
            "config": config.to_text(self.cfg),
            "args": self.args,
            "artifacts": list(self.artifacts),
        }
        self.manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if args.seed is not None:
        out["seed"] = args.seed
    return out


def _resolve(args, below: dict | None = None, above: dict | None = None) -> dict:
    """Defaults < ``below`` < ``--config`` file < ``above`` < ``--set``/``--seed``."""
    base = config.load_file(args.config) if args.config else {}
    return config.resolve(below or {}, base, above or {}, _overrides(args))


def _start(command: str, args, cfg: dict, artifacts: list[str], **cmd_args) -> Run:
    run = Run(command, cfg, Path(args.out_dir), cmd_args)
    for name in artifacts:
        run.path(name)
    run.write_manifest()
    return run


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    flags = {"train.epochs": args.epochs, "loss.alpha": args.alpha, "train.lr": args.lr,
             "train.batch_size": args.batch_size, "encoder.projector_dim": args.projector_dim,
             "loss.repulsion_mode": args.repulsion_mode, "train.precision": args.precision}
    flags = {k: v for k, v in flags.items() if v is not None}
    if args.no_repulsion:
        flags["loss.use_repulsion"] = False
    cfg = _resolve(args, above=flags)
    source = config.build_source(cfg)
    tcfg = config.build_train_config(cfg, source.dimension)
    run = _start("train", args, cfg, ["checkpoint.hsck", "epochs.csv"], wallclock=args.wallclock)
    params, logs = trainer.train(source, tcfg, out_dir=run.out_dir)
    model.save_checkpoint(run.path("checkpoint.hsck"), params, header=config.to_text(cfg))
    trainer.write_epochs_csv(run.path("epochs.csv"), logs, wallclock=args.wallclock)
    last = logs[-1]
    print(f"epoch {last.epoch}: total={last.total:.6f} knn={last.knn_acc} linear={last.linear_acc}")
    return EXIT_OK


def _checkpoint_config(header: dict) -> dict:
    return {k: v for k, v in header.items() if k in config.SCHEMA}


def cmd_export(args) -> int:
    params, header = model.load_checkpoint(args.checkpoint)
    cfg = _resolve(args, _checkpoint_config(header))
    if args.inputs:
        data = read_hseb(args.inputs)
        labels = load_labels(args.labels) if args.labels else None
        if labels is not None and len(labels) != len(data):
            raise FormatError(f"{args.labels}: {len(labels)} labels for {len(data)} inputs")
    else:
        source = config.build_source(cfg, sample_seed=args.sample_seed)
        data, labels = source.flat(), source.labels
    if data.shape[1] != params.config.input_dim:
        raise FormatError(f"inputs have dimension {data.shape[1]}, encoder expects {params.config.input_dim}")
    names = ["embeddings.hseb"] + (["labels.txt"] if labels is not None else [])
    run = _start("export-embeddings", args, cfg, names, checkpoint=str(args.checkpoint),
                 inputs=args.inputs, labels=args.labels, sample_seed=args.sample_seed, dtype=args.dtype)
    emb = model.encode(params, data)
    save_embeddings(run.path("embeddings.hseb"), emb, dtype=args.dtype)
    if labels is not None:
        save_labels(run.path("labels.txt"), labels)
    print(f"wrote {emb.shape[0]} x {emb.shape[1]} embeddings ({args.dtype})")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _resolve(args)
    emb = load_embeddings(args.embeddings, args.labels)
    names = ["geometry.csv"] + (["similarity_hist.csv"] if emb.labels is not None else [])
    run = _start("analyze", args, cfg, names, embeddings=str(args.embeddings), labels=args.labels,
                 pair_samples=args.pair_samples, bins=args.bins, name=args.name)
    if emb.labels is None:
        warnings.warn("no labels given: centroid rank, structure ratio and d' are left empty", stacklevel=1)
    report = geometry.geometry_report(emb, args.pair_samples, cfg["seed"], name=args.name)
    geometry.write_geometry_csv(run.path("geometry.csv"), [report])
    if emb.labels is not None:
        hist = geometry.similarity_histogram(emb, args.bins, args.pair_samples, cfg["seed"])
        geometry.write_histogram_csv(run.path("similarity_hist.csv"), hist)
    print(f"rank={report.embedding_rank:.4f} mpa={report.mpa_degrees:.3f} d'={report.d_prime}")
    return EXIT_OK


def cmd_walk(args) -> int:
    cfg = _resolve(args)
    ends = load_embeddings(args.embeddings, args.labels)
    ref = load_embeddings(args.reference) if args.reference else None
    run = _start("walk", args, cfg, ["walks.csv"], embeddings=str(args.embeddings), labels=args.labels,
                 reference=args.reference, pairs=args.pairs, steps=args.steps,
                 exclude_endpoints=args.exclude_endpoints)
    if ends.labels is not None:
        pairs = topology.walk_pairs(ends.labels, args.pairs, args.pairs, cfg["seed"])
    else:
        i, j = geometry.sample_pairs(None, len(ends), args.pairs, cfg["seed"], "any")
        pairs = np.stack([i, j], 1)
    if ref is None:
        profile = topology.energy_walk(ends, pairs, args.steps, args.exclude_endpoints)
    else:
        profile = topology.energy_walk(ref, pairs, args.steps, False, endpoints=ends)
    topology.write_walks_csv(run.path("walks.csv"), profile)
    peak = profile.peak_energy()
    same = profile.same_class
    if same.any() and (~same).any():
        print(f"mean peak energy: positive {peak[same].mean():.4f}, negative {peak[~same].mean():.4f}")
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = _resolve(args)
    tr = load_embeddings(args.train_embeddings, args.train_labels)
    te = load_embeddings(args.test_embeddings, args.test_labels)
    run = _start("probe", args, cfg, ["probe_results.csv"], train_embeddings=str(args.train_embeddings),
                 test_embeddings=str(args.test_embeddings), k=args.k, probe_epochs=args.probe_epochs,
                 probe_lr=args.probe_lr, kind=args.kind)
    results = []
    if args.kind in ("knn", "both"):
        results.append(probes.knn_probe(tr, te, k=args.k))
    if args.kind in ("linear", "both"):
        results.append(probes.linear_probe(tr, te, epochs=args.probe_epochs, lr=args.probe_lr,
                                           seed=cfg["seed"]))
    probes.append_probe_results(run.path("probe_results.csv"), results)
    for r in results:
        print(f"{r.probe}: top1={r.top1:.4f} top5={r.top5:.4f}")
    return EXIT_OK


def cmd_invert(args) -> int:
    params, header = model.load_checkpoint(args.checkpoint)
    cfg = _resolve(args, _checkpoint_config(header))
    try:
        icfg = topology.InversionConfig(
            scales=[float(s) for s in args.scales.split(",")] if args.scales else
            topology.InversionConfig().scales,
            steps_per_scale=args.steps_per_scale, lr=args.lr, tv_weight=args.tv_weight, tol=args.tol)
    except (ArgumentError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if args.target:
        rows = read_hseb(args.target)
    else:
        rows = read_hseb(args.input)
    if not 0 <= args.index < len(rows):
        raise FormatError(f"row {args.index} out of range for {len(rows)} rows")
    row = rows[args.index]
    if args.target:
        target = row
    else:
        if row.shape[0] != params.config.input_dim:
            raise FormatError("input row does not match the encoder input dimension")
        target = model.forward(params, row[None, :])[0]
    grid = cfg["data.kind"] == "grid-dataset"
    shape = (cfg["data.height"], cfg["data.width"]) if grid else (params.config.input_dim,)
    run = _start("invert", args, cfg, ["inversion.hseb", "inversion.jsonl"], checkpoint=str(args.checkpoint),
                 target=args.target, input=args.input, index=args.index, scales=args.scales,
                 steps_per_scale=args.steps_per_scale, lr=args.lr, tv_weight=args.tv_weight, tol=args.tol)
    result = topology.invert(params, target, shape, icfg, seed=cfg["seed"])
    x = result.x if grid else result.x.reshape(1, -1)
    save_embeddings(run.path("inversion.hseb"), x)
    topology.write_inversion_log(run.path("inversion.jsonl"), result)
    print(f"final cosine distance {result.distance:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--threads", type=int, default=None, help="BLAS thread limit (1 = bitwise reproducible)")
    common.add_argument("--out-dir", default=".", help="directory for artifacts and the run manifest")
    common.add_argument("--config", default=None, help="key=value file or a previous run manifest (.json)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hypersolid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hypersolid {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train an encoder")
    t.add_argument("--epochs", type=int)
    t.add_argument("--alpha", type=float)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--projector-dim", type=int)
    t.add_argument("--repulsion-mode", choices=["all", "negatives-only", "positives-only"])
    t.add_argument("--no-repulsion", action="store_true", help="alignment-only ablation")
    t.add_argument("--precision", choices=["f32", "f64"])
    t.add_argument("--wallclock", action="store_true", help="record epoch seconds in epochs.csv")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("export-embeddings", parents=[common], help="encode a source with a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--inputs", help="HSEB file of raw inputs (default: regenerate the training source)")
    e.add_argument("--labels", help="labels for --inputs")
    e.add_argument("--sample-seed", type=int, default=None, help="draw a fresh sample from the same source")
    e.add_argument("--dtype", choices=["f32", "f64"], default="f64")
    e.set_defaults(func=cmd_export)

    a = sub.add_parser("analyze", parents=[common], help="geometry metrics and similarity histograms")
    a.add_argument("--embeddings", required=True)
    a.add_argument("--labels")
    a.add_argument("--pair-samples", type=int, default=10000)
    a.add_argument("--bins", type=int, default=256)
    a.add_argument("--name", default="")
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("walk", parents=[common], help="energy profiles along interpolation walks")
    w.add_argument("--embeddings", required=True, help="walk endpoints")
    w.add_argument("--labels")
    w.add_argument("--reference", help="reference set for energies (default: the endpoint set)")
    w.add_argument("--pairs", type=int, default=500, help="walks per kind")
    w.add_argument("--steps", type=int, default=20)
    w.add_argument("--exclude-endpoints", action="store_true")
    w.set_defaults(func=cmd_walk)

    pr = sub.add_parser("probe", parents=[common], help="k-NN and linear probes")
    pr.add_argument("--train-embeddings", required=True)
    pr.add_argument("--train-labels", required=True)
    pr.add_argument("--test-embeddings", required=True)
    pr.add_argument("--test-labels", required=True)
    pr.add_argument("--kind", choices=["knn", "linear", "both"], default="both")
    pr.add_argument("--k", type=int, default=5)
    pr.add_argument("--probe-epochs", type=int, default=200)
    pr.add_argument("--probe-lr", type=float, default=1e-2)
    pr.set_defaults(func=cmd_probe)

    iv = sub.add_parser("invert", parents=[common], help="reconstruct an input from an embedding")
    iv.add_argument("--checkpoint", required=True)
    src = iv.add_mutually_exclusive_group(required=True)
    src.add_argument("--target", help="HSEB file of target embeddings")
    src.add_argument("--input", help="HSEB file of inputs; the target is their encoding")
    iv.add_argument("--index", type=int, default=0)
    iv.add_argument("--scales", help="comma-separated, ending at 1.0")
    iv.add_argument("--steps-per-scale", type=int, default=4000)
    iv.add_argument("--lr", type=float, default=0.05)
    iv.add_argument("--tv-weight", type=float, default=2.0)
    iv.add_argument("--tol", type=float, default=None)
    iv.set_defaults(func=cmd_invert)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ArgumentError, DimensionError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
