import math

import numpy as np
import pytest

from hypersolid.errors import ArgumentError
from hypersolid.geometry import (
    GEOMETRY_COLUMNS, UndefinedRankError, anisotropy, center_vector_norm, effective_rank,
    effective_rank_from_singular_values, feature_correlation, geometry_report, mean_pairwise_angle,
    sample_pairs, sensitivity_index, similarity_histogram, write_geometry_csv, write_histogram_csv,
)
from hypersolid.views import EmbeddingSet


def entropy_rank_oracle(m):
    s = np.linalg.svd(m, compute_uv=False)
    s = s[s > 1e-10 * s.max()]
    p = s / s.sum()
    return math.exp(-sum(float(x) * math.log(float(x)) for x in p))


@pytest.mark.parametrize("sv,expected", [((1, 1, 1, 1), 4.0), ((1, 1, 0, 0, 0), 2.0),
                                         ((2, 1, 1), 2 ** 1.5)])
def test_effective_rank_hand_values(sv, expected):
    assert effective_rank_from_singular_values(sv) == pytest.approx(expected, abs=1e-9)
    n = len(sv)
    m = np.zeros((n + 2, n))
    m[:n, :n] = np.diag(sv)
    assert effective_rank(m) == pytest.approx(expected, abs=1e-9)


def test_effective_rank_rotation_invariant(rng):
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    m = np.diag([2.0, 1.0, 1.0, 0, 0, 0])
    assert effective_rank(q @ m) == pytest.approx(2 ** 1.5, abs=1e-9)


def test_effective_rank_all_zero():
    with pytest.raises(UndefinedRankError):
        effective_rank(np.zeros((4, 3)))
    with pytest.raises(UndefinedRankError):
        effective_rank(np.ones((4, 3)), center=True)


def test_collapse_signature():
    x = np.tile([0.3, -0.4, 0.5], (50, 1))
    r = geometry_report(EmbeddingSet(x, np.arange(50) % 2), pair_samples=500)
    assert r.cvn == pytest.approx(1.0)
    assert r.degenerate
    assert math.isnan(r.anisotropy)
    assert r.mpa_degrees == pytest.approx(0.0, abs=1e-5)
    assert r.embedding_rank == pytest.approx(1.0)


@pytest.mark.parametrize("d", [4, 16])
def test_standard_basis(d):
    x = np.eye(d)
    r = geometry_report(EmbeddingSet(x, np.arange(d)), pair_samples=2000)
    assert r.cvn == pytest.approx(1 / math.sqrt(d))
    assert r.mpa_degrees == pytest.approx(90.0, abs=1e-9)
    assert r.embedding_rank == pytest.approx(entropy_rank_oracle(x), abs=1e-9)
    assert r.embedding_rank == pytest.approx(d, abs=1e-9)
    centered = x - x.mean(0)
    assert effective_rank(x, center=True) == pytest.approx(entropy_rank_oracle(centered), abs=1e-9)
    assert effective_rank(x, center=True) == pytest.approx(d - 1, abs=1e-9)


def test_d_prime_synthetic_distributions():
    r = np.random.default_rng(5)
    pos = r.normal(0.8, 0.1, 20000)
    neg = r.normal(0.2, 0.1, 20000)
    assert sensitivity_index(pos, neg) == pytest.approx(6.0, abs=0.2)


def test_d_prime_zero_variance_is_infinite():
    x = np.array([[1.0, 0.0]] * 5 + [[0.0, 1.0]] * 5)
    r = geometry_report(EmbeddingSet(x, [0] * 5 + [1] * 5), pair_samples=200)
    assert r.d_prime == math.inf
    assert r.d_prime_infinite


def test_fewer_than_two_classes(rng):
    with pytest.raises(ArgumentError):
        geometry_report(EmbeddingSet(rng.standard_normal((10, 3)), np.zeros(10)))


def test_unlabelled_report(rng):
    r = geometry_report(EmbeddingSet(rng.standard_normal((30, 4))), pair_samples=300)
    assert r.d_prime is None and r.centroid_rank is None and r.structure_ratio is None


def test_anisotropy_and_correlation_oracles(rng):
    x = rng.standard_normal((200, 5)) @ rng.standard_normal((5, 5))
    u = x / np.linalg.norm(x, axis=1, keepdims=True)
    ev = np.linalg.eigvalsh(np.cov(u.T))
    assert anisotropy(x) == pytest.approx(ev.max() / ev.sum(), rel=1e-10)
    c = np.corrcoef(x.T)
    off = ~np.eye(5, dtype=bool)
    assert feature_correlation(x) == pytest.approx(np.abs(c[off]).mean(), rel=1e-10)


def test_isotropic_metrics_small(rng):
    x = rng.standard_normal((4000, 16))
    assert center_vector_norm(x) < 0.05
    assert anisotropy(x) < 0.1
    assert mean_pairwise_angle(x, 5000) == pytest.approx(90.0, abs=1.0)


def test_sample_pairs_kinds(rng):
    labels = rng.integers(0, 5, 300)
    for kind, same in (("positive", True), ("negative", False)):
        i, j = sample_pairs(labels, 300, 2000, 0, kind)
        assert len(i) == 2000
        assert np.all(i != j)
        assert np.all((labels[i] == labels[j]) == same)
    i, j = sample_pairs(None, 300, 2000, 0, "any")
    assert np.all(i != j)
    a = sample_pairs(labels, 300, 50, 3, "negative")
    b = sample_pairs(labels, 300, 50, 3, "negative")
    assert all(np.array_equal(p, q) for p, q in zip(a, b))


def test_positive_pairs_uniform_within_class():
    labels = np.array([0, 0, 0, 1, 1])
    i, j = sample_pairs(labels, 5, 30000, 1, "positive")
    counts = np.bincount(j[labels[j] == 0], minlength=3)[:3]
    assert counts.min() > 0.9 * counts.mean()


def test_histogram_orthogonal_classes():
    x = np.array([[1.0, 0.0]] * 4 + [[0.0, 1.0]] * 4)
    h = similarity_histogram(EmbeddingSet(x, [0] * 4 + [1] * 4), bins=8, pair_samples=500)
    zero_bin = np.searchsorted(h.edges, 0.0, side="right") - 1
    width = h.edges[1] - h.edges[0]
    assert h.neg_density[zero_bin] * width == pytest.approx(1.0)
    assert np.sum(h.neg_density) * width == pytest.approx(1.0)
    assert h.pos_density[-1] * width == pytest.approx(1.0)


def test_histogram_single_member_warns():
    x = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.warns(UserWarning, match="single member"):
        similarity_histogram(EmbeddingSet(x, [0, 0, 1]), bins=4, pair_samples=100)


def test_csv_outputs(tmp_path, rng):
    e = EmbeddingSet(rng.standard_normal((40, 4)), np.arange(40) % 2)
    r = geometry_report(e, 500, name="run")
    write_geometry_csv(tmp_path / "g.csv", [r])
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0].split(",") == GEOMETRY_COLUMNS
    assert lines[1].startswith("run,")
    write_histogram_csv(tmp_path / "h.csv", similarity_histogram(e, 16, 500))
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 17
