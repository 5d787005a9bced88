"""Embedding geometry metrics and pairwise similarity distributions."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError
from .views import EmbeddingSet

GEOMETRY_COLUMNS = ["name", "anisotropy", "correlation", "cvn", "centroid_rank",
                    "embedding_rank", "structure_ratio", "d_prime", "mpa_degrees"]


class UndefinedRankError(ArgumentError):
    """Effective rank of an all-zero matrix."""


def effective_rank_from_singular_values(s) -> float:
    """``exp(H(p))`` with ``p = s / sum(s)`` and ``0 * log 0 = 0``."""
    s = np.abs(np.asarray(s, dtype=np.float64))
    total = s.sum()
    if not total > 0:
        raise UndefinedRankError("effective rank is undefined for an all-zero spectrum")
    p = s[s > 0] / total
    return float(np.exp(-np.sum(p * np.log(p))))


def effective_rank(matrix, center: bool = False) -> float:
    """Entropy-based effective rank of an N x D matrix.

    Columns are mean-centered first when ``center`` is True. Singular
    values at round-off level relative to the largest input entry count as
    exact zeros, so a fully collapsed set raises :class:`UndefinedRankError`
    instead of returning the rank of floating-point noise.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or min(m.shape) < 1:
        raise ArgumentError("effective_rank expects a non-empty 2-D matrix")
    scale = np.abs(m).max()
    if center:
        m = m - m.mean(axis=0, keepdims=True)
    s = np.linalg.svd(m, compute_uv=False)
    tol = 8 * np.finfo(np.float64).eps * scale * np.sqrt(m.size)
    s = np.where(s > tol, s, 0.0)
    return effective_rank_from_singular_values(s)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(n, 1e-12)


# ---------------------------------------------------------------------------
# pair sampling


def sample_pairs(labels: np.ndarray | None, n: int, count: int, seed: int, kind: str = "any"):
    """Draw ``count`` index pairs (i != j).

    ``kind`` is ``"any"``, ``"positive"`` (same label) or ``"negative"``
    (different label). Returns two int arrays, possibly empty when no pair of
    the requested kind exists.
    """
    rng = np.random.default_rng([seed, {"any": 0, "positive": 1, "negative": 2}[kind]])
    if kind == "any":
        if n < 2:
            return np.zeros(0, int), np.zeros(0, int)
        i = rng.integers(0, n, count)
        j = (i + rng.integers(1, n, count)) % n
        return i, j
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    classes, start, size = np.unique(sorted_labels, return_index=True, return_counts=True)
    where = np.searchsorted(classes, labels)  # class slot of every sample
    if kind == "positive":
        eligible = np.flatnonzero(size[where] >= 2)
        if eligible.size == 0:
            return np.zeros(0, int), np.zeros(0, int)
        i = eligible[rng.integers(0, eligible.size, count)]
        c = where[i]
        pos_in_class = np.empty(n, int)
        pos_in_class[order] = np.arange(n) - np.repeat(start, size)
        offset = (pos_in_class[i] + rng.integers(1, size[c])) % size[c]  # high is exclusive; size>=2
        return i, order[start[c] + offset]
    eligible = np.flatnonzero(size[where] < n)
    if eligible.size == 0:
        return np.zeros(0, int), np.zeros(0, int)
    i = eligible[rng.integers(0, eligible.size, count)]
    c = where[i]
    r = (rng.random(count) * (n - size[c])).astype(int)
    r = np.minimum(r, n - size[c] - 1)
    r = np.where(r >= start[c], r + size[c], r)
    return i, order[r]


def pair_cosines(vectors: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    u = _unit_rows(np.asarray(vectors, dtype=np.float64))
    return np.clip(np.einsum("nd,nd->n", u[i], u[j]), -1.0, 1.0)


def sensitivity_index(pos, neg) -> float:
    """``(mean_pos - mean_neg) / sqrt((var_pos + var_neg) / 2)``; +inf on zero variance."""
    pos, neg = np.asarray(pos, float), np.asarray(neg, float)
    if pos.size < 2 or neg.size < 2:
        raise ArgumentError("need at least two positive and two negative similarities")
    pooled = math.sqrt((pos.var(ddof=1) + neg.var(ddof=1)) / 2.0)
    gap = float(pos.mean() - neg.mean())
    if pooled == 0.0:
        return math.inf if gap >= 0 else -math.inf
    return gap / pooled


# ---------------------------------------------------------------------------
# report


@dataclass
class GeometryReport:
    anisotropy: float
    correlation: float
    cvn: float
    centroid_rank: float | None
    embedding_rank: float
    structure_ratio: float | None
    d_prime: float | None
    mpa_degrees: float
    degenerate: bool = False
    d_prime_infinite: bool = False
    name: str = ""

    def row(self) -> list:
        d = asdict(self)
        return [d[c] for c in GEOMETRY_COLUMNS]


def anisotropy(vectors: np.ndarray) -> float:
    """Largest-eigenvalue share of the covariance of row-normalized embeddings."""
    u = _unit_rows(np.asarray(vectors, dtype=np.float64))
    u = u - u.mean(axis=0, keepdims=True)
    ev = np.linalg.svd(u, compute_uv=False) ** 2
    total = ev.sum()
    if total <= 1e-24 * len(u):
        return math.nan
    return float(ev.max() / total)


def feature_correlation(vectors: np.ndarray) -> float:
    """Mean absolute off-diagonal Pearson correlation between feature columns.

    Constant columns have no defined correlation and are left out.
    """
    x = np.asarray(vectors, dtype=np.float64)
    x = x - x.mean(axis=0, keepdims=True)
    sd = np.sqrt((x * x).sum(axis=0))
    keep = sd > 1e-12 * max(1.0, np.abs(x).max())
    if keep.sum() < 2:
        return math.nan
    z = x[:, keep] / sd[keep]
    c = z.T @ z
    d = c.shape[0]
    off = ~np.eye(d, dtype=bool)
    return float(np.abs(c[off]).mean())


def center_vector_norm(vectors: np.ndarray) -> float:
    return float(np.linalg.norm(_unit_rows(np.asarray(vectors, dtype=np.float64)).mean(axis=0)))


def mean_pairwise_angle(vectors: np.ndarray, pair_samples: int = 10000, seed: int = 0) -> float:
    i, j = sample_pairs(None, len(vectors), pair_samples, seed, "any")
    if i.size == 0:
        raise ArgumentError("need at least two embeddings")
    return float(np.degrees(np.arccos(pair_cosines(vectors, i, j))).mean())


def class_centroids(vectors: np.ndarray, labels: np.ndarray) -> np.ndarray:
    classes = np.unique(labels)
    return np.stack([vectors[labels == c].mean(axis=0) for c in classes])


def geometry_report(emb: EmbeddingSet, pair_samples: int = 10000, seed: int = 0,
                    name: str = "") -> GeometryReport:
    """Compute every metric of the report.

    Without labels the label-dependent fields are None; labels with a
    single class raise :class:`ArgumentError`. A set whose spectrum or anisotropy is undefined is flagged
    ``degenerate``; its rank-based fields are NaN.
    """
    x = np.asarray(emb.vectors, dtype=np.float64)
    if len(x) < 2:
        raise ArgumentError("geometry_report needs at least two embeddings")
    degenerate = False
    try:
        erank = effective_rank(x)
    except UndefinedRankError:
        erank, degenerate = math.nan, True
    aniso = anisotropy(x)
    if math.isnan(aniso):
        degenerate = True
    report = GeometryReport(
        anisotropy=aniso,
        correlation=feature_correlation(x),
        cvn=center_vector_norm(x),
        centroid_rank=None,
        embedding_rank=erank,
        structure_ratio=None,
        d_prime=None,
        mpa_degrees=mean_pairwise_angle(x, pair_samples, seed),
        degenerate=degenerate,
        name=name,
    )
    labels = emb.labels
    if labels is None:
        return report
    if len(np.unique(labels)) < 2:
        raise ArgumentError("centroid rank and d' need at least two classes")
    try:
        report.centroid_rank = effective_rank(class_centroids(x, labels))
    except UndefinedRankError:
        report.centroid_rank = math.nan
        report.degenerate = True
    if report.centroid_rank and not math.isnan(report.centroid_rank):
        report.structure_ratio = report.embedding_rank / report.centroid_rank
    else:
        report.structure_ratio = math.nan
    pi, pj = sample_pairs(labels, len(x), pair_samples, seed, "positive")
    ni, nj = sample_pairs(labels, len(x), pair_samples, seed, "negative")
    if pi.size >= 2 and ni.size >= 2:
        report.d_prime = sensitivity_index(pair_cosines(x, pi, pj), pair_cosines(x, ni, nj))
        report.d_prime_infinite = math.isinf(report.d_prime)
    return report


def write_geometry_csv(path, reports: list[GeometryReport]) -> None:
    fmt = lambda v: "" if v is None else v if isinstance(v, str) else repr(float(v))  # noqa: E731
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GEOMETRY_COLUMNS)
        for r in reports:
            w.writerow([fmt(v) for v in r.row()])


# ---------------------------------------------------------------------------
# histograms


@dataclass
class SimilarityHistogram:
    edges: np.ndarray
    pos_density: np.ndarray
    neg_density: np.ndarray
    pos_count: int
    neg_count: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def similarity_histogram(emb: EmbeddingSet, bins: int = 256, pair_samples: int = 10000,
                         seed: int = 0) -> SimilarityHistogram:
    """Density histograms over [-1, 1] of same-class and different-class cosines."""
    if emb.labels is None:
        raise ArgumentError("similarity_histogram requires labels")
    labels = emb.labels
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts == 1):
        warnings.warn(f"classes {classes[counts == 1].tolist()} have a single member "
                      "and contribute no positive pairs", stacklevel=2)
    edges = np.linspace(-1.0, 1.0, bins + 1)

    def density(kind):
        i, j = sample_pairs(labels, len(emb), pair_samples, seed, kind)
        if i.size == 0:
            return np.zeros(bins), 0
        c = pair_cosines(emb.vectors, i, j)
        hist, _ = np.histogram(c, bins=edges, density=True)
        return hist, int(i.size)

    pos, npos = density("positive")
    neg, nneg = density("negative")
    return SimilarityHistogram(edges, pos, neg, npos, nneg)


def write_histogram_csv(path, hist: SimilarityHistogram) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_center", "pos_density", "neg_density"])
        for c, p, n in zip(hist.centers, hist.pos_density, hist.neg_density):
            w.writerow([repr(float(c)), repr(float(p)), repr(float(n))])
