"""Sample sources, multi-view augmentation and the HSEB embedding file format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, FormatError

HSEB_MAGIC = b"HSEB1\n"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


@dataclass
class SampleSource:
    """A finite pool of samples.

    ``data`` is N x P for ``synthetic-clusters`` and ``external-embeddings``
    and N x H x W for ``grid-dataset``.
    """

    kind: str
    data: np.ndarray
    labels: np.ndarray | None = None
    class_count: int = 0

    def __post_init__(self):
        if self.kind not in ("synthetic-clusters", "grid-dataset", "external-embeddings"):
            raise ArgumentError(f"unknown source kind {self.kind!r}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.data):
                raise ArgumentError("labels and data differ in length")
            if self.class_count == 0 and len(self.labels):
                self.class_count = int(self.labels.max()) + 1
            if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
                raise ArgumentError("labels must lie in [0, class_count)")

    @property
    def size(self) -> int:
        return len(self.data)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.data.shape[1:]))

    @property
    def is_grid(self) -> bool:
        return self.kind == "grid-dataset"

    def flat(self) -> np.ndarray:
        """Samples as an N x P matrix."""
        return self.data.reshape(len(self.data), -1)

    def subset(self, indices) -> "SampleSource":
        indices = np.asarray(indices)
        labels = None if self.labels is None else self.labels[indices]
        return SampleSource(self.kind, self.data[indices], labels, self.class_count)

    def split(self, test_fraction: float, seed: int) -> tuple["SampleSource", "SampleSource"]:
        """Deterministic random train/test partition."""
        if not 0 < test_fraction < 1:
            raise ArgumentError("test_fraction must be in (0, 1)")
        perm = np.random.default_rng(seed).permutation(self.size)
        n_test = max(1, int(round(self.size * test_fraction)))
        return self.subset(np.sort(perm[n_test:])), self.subset(np.sort(perm[:n_test]))


def synthetic_clusters(dim: int = 64, classes: int = 8, size: int = 4096,
                       sigma: float = 0.15, seed: int = 0,
                       sample_seed: int | None = None) -> SampleSource:
    """Gaussian blobs around ``classes`` prototypes drawn uniformly on the unit sphere.

    Prototypes depend only on ``seed``; ``sample_seed`` (defaults to ``seed``)
    controls which points are drawn, so held-out sets can share prototypes.
    """
    if dim < 1 or classes < 1 or size < 1:
        raise ArgumentError("dim, classes and size must be positive")
    proto = np.random.default_rng(seed).standard_normal((classes, dim))
    proto /= np.linalg.norm(proto, axis=1, keepdims=True)
    rng = np.random.default_rng([seed, 1 if sample_seed is None else 2, sample_seed or 0])
    labels = np.arange(size) % classes
    rng.shuffle(labels)
    data = proto[labels] + sigma * rng.standard_normal((size, dim))
    return SampleSource("synthetic-clusters", data, labels, classes)


def grid_dataset(height: int = 16, width: int = 16, classes: int = 8, size: int = 2048,
                 sigma: float = 0.15, seed: int = 0) -> SampleSource:
    """Tiny image-like dataset: smooth random class templates plus pixel noise."""
    rng = np.random.default_rng(seed)
    templates = rng.standard_normal((classes, height, width))
    templates = np.stack([ndimage.gaussian_filter(t, 2.0, mode="wrap") for t in templates])
    templates /= templates.std(axis=(1, 2), keepdims=True)
    labels = np.arange(size) % classes
    rng.shuffle(labels)
    data = templates[labels] + sigma * rng.standard_normal((size, height, width))
    return SampleSource("grid-dataset", data, labels, classes)


@dataclass
class ViewConfig:
    global_views: int = 2
    local_views: int = 6
    noise_sigma: float = 0.05
    mask_fraction_global: float = 0.1
    mask_fraction_local: float = 0.5
    crop_scale_global: tuple[float, float] = (0.4, 1.0)
    crop_scale_local: tuple[float, float] = (0.05, 0.4)
    flip_prob: float = 0.5

    def __post_init__(self):
        if self.global_views < 2:
            raise ArgumentError("at least two global views are required")
        if self.local_views < 0:
            raise ArgumentError("local_views must be >= 0")
        for f in (self.mask_fraction_global, self.mask_fraction_local):
            if not 0 <= f < 1:
                raise ArgumentError("mask fractions must lie in [0, 1)")
        if self.mask_fraction_local < self.mask_fraction_global:
            raise ArgumentError("local views must mask at least as much as global views")
        self.crop_scale_global = tuple(self.crop_scale_global)
        self.crop_scale_local = tuple(self.crop_scale_local)

    @property
    def views(self) -> int:
        return self.global_views + self.local_views


def make_views(source: SampleSource, indices, cfg: ViewConfig,
               rng: np.random.Generator) -> np.ndarray:
    """Augment each indexed sample into ``cfg.views`` views.

    Returns B x V x P for vector sources and B x V x H x W for grid sources.
    The first ``cfg.global_views`` views along axis 1 are global.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ArgumentError("indices must be non-empty")
    if indices.min() < 0 or indices.max() >= source.size:
        raise ArgumentError("sample index out of range")
    base = source.data[indices]
    if source.is_grid:
        return _grid_views(base, cfg, rng)
    return _vector_views(base, cfg, rng)


def _vector_views(base: np.ndarray, cfg: ViewConfig, rng: np.random.Generator) -> np.ndarray:
    b, p = base.shape
    v = cfg.views
    out = np.repeat(base[:, None, :], v, axis=1)
    if cfg.noise_sigma > 0:
        out = out + cfg.noise_sigma * rng.standard_normal(out.shape)
    fractions = np.array([cfg.mask_fraction_global] * cfg.global_views
                         + [cfg.mask_fraction_local] * cfg.local_views)
    counts = np.round(fractions * p).astype(int)
    if counts.any():
        # rank of a uniform key per coordinate gives a uniform random subset
        ranks = np.argsort(np.argsort(rng.random((b, v, p)), axis=-1), axis=-1)
        out = np.where(ranks < counts[None, :, None], 0.0, out)
    return out


def _grid_views(base: np.ndarray, cfg: ViewConfig, rng: np.random.Generator) -> np.ndarray:
    b, h, w = base.shape
    v = cfg.views
    out = np.empty((b, v, h, w))
    for i in range(b):
        for j in range(v):
            lo, hi = cfg.crop_scale_global if j < cfg.global_views else cfg.crop_scale_local
            area = rng.uniform(lo, hi)
            ch = min(h, max(1, int(round(h * np.sqrt(area)))))
            cw = min(w, max(1, int(round(w * np.sqrt(area)))))
            y0 = rng.integers(0, h - ch + 1)
            x0 = rng.integers(0, w - cw + 1)
            crop = base[i, y0:y0 + ch, x0:x0 + cw]
            view = resize(crop, (h, w))
            if rng.random() < cfg.flip_prob:
                view = view[:, ::-1]
            out[i, j] = view
    if cfg.noise_sigma > 0:
        out += cfg.noise_sigma * rng.standard_normal(out.shape)
    return out


def resize(img: np.ndarray, shape: tuple[int, int], order: int = 1) -> np.ndarray:
    """Spline resize of a 2-D array to ``shape`` (order 1 bilinear, 3 bicubic)."""
    if img.shape == tuple(shape):
        return img.copy()
    zoom = (shape[0] / img.shape[0], shape[1] / img.shape[1])
    out = ndimage.zoom(img, zoom, order=order, mode="nearest", grid_mode=True)
    return out[: shape[0], : shape[1]]


# ---------------------------------------------------------------------------
# HSEB embedding files


@dataclass
class EmbeddingSet:
    vectors: np.ndarray
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors)
        if self.vectors.ndim != 2:
            raise ArgumentError("embeddings must be an N x D matrix")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.vectors):
                raise ArgumentError("one label per embedding is required")

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def save_embeddings(path, vectors: np.ndarray, dtype: str = "f64") -> None:
    """Write an N x D matrix as HSEB (magic, u32 N, u32 D, u8 dtype, values)."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 2:
        raise ArgumentError("expected an N x D matrix")
    code = {"f32": 0, "f64": 1}[dtype]
    n, d = vectors.shape
    with open(path, "wb") as fh:
        fh.write(HSEB_MAGIC)
        fh.write(struct.pack("<IIB", n, d, code))
        fh.write(np.ascontiguousarray(vectors, dtype=_DTYPES[code]).tobytes())


def read_hseb(path) -> np.ndarray:
    """Read an HSEB matrix; raises :class:`FormatError` on any layout problem."""
    raw = Path(path).read_bytes()
    head = len(HSEB_MAGIC) + 9
    if raw[: len(HSEB_MAGIC)] != HSEB_MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(raw) < head:
        raise FormatError(f"{path}: truncated header")
    n, d, code = struct.unpack("<IIB", raw[len(HSEB_MAGIC):head])
    if code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    dt = _DTYPES[code]
    expected = n * d * dt.itemsize
    if len(raw) - head != expected:
        raise FormatError(f"{path}: expected {expected} payload bytes, found {len(raw) - head}")
    return np.frombuffer(raw, dtype=dt, offset=head).reshape(n, d).astype(np.float64)


def load_labels(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    try:
        return np.array([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: labels must be integers, one per line") from exc


def save_labels(path, labels) -> None:
    Path(path).write_text("".join(f"{int(x)}\n" for x in labels))


def load_embeddings(path, labels_path=None) -> EmbeddingSet:
    vectors = read_hseb(path)
    if len(vectors) == 0:
        raise ArgumentError(f"{path}: embedding set is empty")
    labels = None
    if labels_path is not None:
        labels = load_labels(labels_path)
        if len(labels) != len(vectors):
            raise FormatError(f"{labels_path}: {len(labels)} labels for {len(vectors)} embeddings")
    return EmbeddingSet(vectors, labels, {"path": str(path)})
