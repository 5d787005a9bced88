"""Flat ``key=value`` run configuration with dotted namespaces.

Files look like::

    # comments are allowed
    loss.alpha=0.9
    train.epochs=20

Every key has a default, so a resolved config always lists the full set.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ArgumentError, ConfigError
from .loss import LossConfig
from .model import EncoderConfig
from .trainer import TrainConfig
from .views import SampleSource, ViewConfig, grid_dataset, synthetic_clusters


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s) -> list[int]:
    if isinstance(s, (list, tuple)):
        return [int(x) for x in s]
    return [int(x) for x in str(s).split(",") if x.strip()]


def _pair(s) -> tuple[float, float]:
    vals = [float(x) for x in (s if isinstance(s, (list, tuple)) else str(s).split(","))]
    if len(vals) != 2:
        raise ValueError("expected two comma-separated numbers")
    return vals[0], vals[1]


SCHEMA: dict[str, tuple[object, callable]] = {
    "seed": (0, int),
    "data.kind": ("synthetic-clusters", str),
    "data.dim": (64, int),
    "data.classes": (8, int),
    "data.size": (4096, int),
    "data.sigma": (0.15, float),
    "data.height": (16, int),
    "data.width": (16, int),
    "data.seed": (0, int),
    "train.lr": (1e-3, float),
    "train.weight_decay": (1e-6, float),
    "train.beta1": (0.9, float),
    "train.beta2": (0.999, float),
    "train.eps_opt": (1e-8, float),
    "train.batch_size": (128, int),
    "train.epochs": (20, int),
    "train.probe_every": (5, int),
    "train.knn_k": (5, int),
    "train.probe_epochs": (200, int),
    "train.precision": ("f64", str),
    "loss.alpha": (0.9, float),
    "loss.norm_lambda": (1e-6, float),
    "loss.repulsion_mode": ("all", str),
    "loss.use_repulsion": (True, _bool),
    "views.global_views": (2, int),
    "views.local_views": (6, int),
    "views.noise_sigma": (0.05, float),
    "views.mask_fraction_global": (0.1, float),
    "views.mask_fraction_local": (0.5, float),
    "views.crop_scale_global": ((0.4, 1.0), _pair),
    "views.crop_scale_local": ((0.05, 0.4), _pair),
    "views.flip_prob": (0.5, float),
    "encoder.hidden_dims": ([256, 256], _ints),
    "encoder.projector_dim": (1024, int),
}


def valid_keys() -> list[str]:
    return sorted(SCHEMA)


def _check_key(key: str) -> None:
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(valid_keys())}")


def parse_text(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        _check_key(k)
        out[k] = v
    return out


def load_file(path) -> dict:
    """Read a ``key=value`` file or the ``config`` block of a run manifest (``.json``)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            cfg = json.loads(text)["config"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: not a run manifest") from exc
        for k in cfg:
            _check_key(k)
        return dict(cfg)
    return parse_text(text)


def resolve(*layers: dict) -> dict:
    """Merge override layers (later wins) on top of the defaults and coerce types."""
    out = {k: default for k, (default, _) in SCHEMA.items()}
    for layer in layers:
        for k, v in layer.items():
            _check_key(k)
            try:
                out[k] = SCHEMA[k][1](v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {k}: {v!r} ({exc})") from exc
    return out


def to_text(cfg: dict) -> dict[str, str]:
    """String form of every value, as written to headers and manifests."""
    def fmt(v):
        if isinstance(v, (list, tuple)):
            return ",".join(str(x) for x in v)
        return str(v)
    return {k: fmt(cfg[k]) for k in sorted(cfg)}


def build_source(cfg: dict, sample_seed: int | None = None, size: int | None = None) -> SampleSource:
    kind = cfg["data.kind"]
    size = size or cfg["data.size"]
    try:
        if kind == "synthetic-clusters":
            return synthetic_clusters(cfg["data.dim"], cfg["data.classes"], size, cfg["data.sigma"],
                                      cfg["data.seed"], sample_seed)
        if kind == "grid-dataset":
            seed = cfg["data.seed"] if sample_seed is None else cfg["data.seed"] * 1000003 + sample_seed
            return grid_dataset(cfg["data.height"], cfg["data.width"], cfg["data.classes"], size,
                                cfg["data.sigma"], seed)
    except ArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"data.kind must be synthetic-clusters or grid-dataset, got {kind!r}")


def build_train_config(cfg: dict, input_dim: int) -> TrainConfig:
    try:
        return TrainConfig(
            lr=cfg["train.lr"], weight_decay=cfg["train.weight_decay"], beta1=cfg["train.beta1"],
            beta2=cfg["train.beta2"], eps_opt=cfg["train.eps_opt"], batch_size=cfg["train.batch_size"],
            epochs=cfg["train.epochs"], seed=cfg["seed"], probe_every=cfg["train.probe_every"],
            knn_k=cfg["train.knn_k"], probe_epochs=cfg["train.probe_epochs"],
            precision=cfg["train.precision"],
            loss=LossConfig(cfg["loss.alpha"], cfg["loss.norm_lambda"], cfg["loss.repulsion_mode"],
                            cfg["loss.use_repulsion"]),
            views=ViewConfig(cfg["views.global_views"], cfg["views.local_views"], cfg["views.noise_sigma"],
                             cfg["views.mask_fraction_global"], cfg["views.mask_fraction_local"],
                             cfg["views.crop_scale_global"], cfg["views.crop_scale_local"],
                             cfg["views.flip_prob"]),
            encoder=EncoderConfig(input_dim, cfg["encoder.hidden_dims"], cfg["encoder.projector_dim"]),
        )
    except ArgumentError as exc:
        raise ConfigError(str(exc)) from exc
