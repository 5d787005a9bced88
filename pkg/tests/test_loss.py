import math

import numpy as np
import pytest

from hypersolid import model
from hypersolid import ndtensor as nd
from hypersolid.errors import ArgumentError, DimensionError
from hypersolid.loss import (
    LossConfig, alignment_loss, collision_fraction, cosine_matrix, hypersolid_loss,
    markov_collision_bound, normalization_loss, pair_mask, repulsion_loss,
)

from conftest import numeric_grad, rel_err
from oracles import clustered_batch, max_target, reference_loss


def f(x):
    return float(np.asarray(x))


def test_repulsion_orthogonal_is_zero():
    assert f(repulsion_loss(np.eye(2).reshape(1, 2, 2), 0.9)) == 0.0


def test_repulsion_identical_pair():
    feats = np.array([[[1.0, 0.0], [1.0, 0.0]]])
    assert f(repulsion_loss(feats, 0.9)) == pytest.approx(0.5, abs=1e-12)


def test_repulsion_three_vectors():
    s = math.sqrt(2) / 2
    feats = np.array([[[1.0, 0.0], [0.0, 1.0], [s, s]]])
    assert f(repulsion_loss(feats, 0.5)) == pytest.approx(0.18409, abs=1e-5)
    assert f(repulsion_loss(feats, 0.5)) == pytest.approx(4 * (s - 0.5) / 0.5 / 9, abs=1e-12)


def test_repulsion_needs_two_embeddings():
    with pytest.raises(ArgumentError):
        repulsion_loss(np.ones((1, 1, 3)))


def test_bad_shapes():
    with pytest.raises(DimensionError):
        hypersolid_loss(np.ones((4, 3)))
    with pytest.raises(DimensionError):
        repulsion_loss(np.ones((1, 2, 3)), mask=np.ones((3, 3)))


def test_alignment_single_view_is_zero(rng):
    assert f(alignment_loss(rng.standard_normal((1, 1, 5)))) == pytest.approx(0.0, abs=1e-15)


def test_alignment_two_views():
    feats = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    assert f(alignment_loss(feats)) == pytest.approx(1 - math.sqrt(0.5), abs=1e-12)
    assert f(alignment_loss(feats)) == pytest.approx(0.29289, abs=1e-5)
    assert f(alignment_loss(feats)) == pytest.approx(reference_loss(feats)[0], abs=1e-15)


def test_normalization_values():
    unit = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    assert f(normalization_loss(unit, 1.0)) == 0.0
    mixed = np.array([[[2.0, 0.0], [0.0, 0.0]]])
    assert f(normalization_loss(mixed, 1.0)) == 0.0
    twos = 2 * unit
    assert f(normalization_loss(twos, 1e-6)) == pytest.approx(1e-6, rel=1e-12)
    with pytest.raises(ArgumentError):
        normalization_loss(unit, -1.0)


@pytest.mark.parametrize("b,v", [(1, 4), (3, 2), (2, 8)])
def test_collapsed_batch_closed_form(b, v):
    feats = np.tile(np.array([0.6, 0.8, 0.0]), (b, v, 1))
    m = b * v
    br = hypersolid_loss(feats, LossConfig(alpha=0.9, norm_lambda=0.0)).values()
    assert br["alignment"] == pytest.approx(0.0, abs=1e-15)
    assert br["repulsion"] == pytest.approx((m * m - m) / (m * m), rel=1e-12)
    assert br["total"] == pytest.approx((m - 1) / m, rel=1e-12)


def test_negatives_only_single_image_is_zero():
    feats = np.tile(np.array([1.0, 0.0]), (1, 5, 1))
    assert f(repulsion_loss(feats, 0.9, "negatives-only")) == 0.0


def test_pair_mask_modes():
    allm = pair_mask(2, 2, "all")
    neg = pair_mask(2, 2, "negatives-only")
    pos = pair_mask(2, 2, "positives-only")
    np.testing.assert_array_equal(neg + pos, allm)
    assert np.all(np.diag(allm) == 0)
    np.testing.assert_array_equal(pos, [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    with pytest.raises(ArgumentError):
        pair_mask(2, 2, "bogus")


def test_modes_keep_full_divisor(rng):
    feats = clustered_batch(rng, 3, 4, 6, 0.05)
    total = f(repulsion_loss(feats, 0.5, "all"))
    split = f(repulsion_loss(feats, 0.5, "negatives-only")) + f(repulsion_loss(feats, 0.5, "positives-only"))
    assert total == pytest.approx(split, rel=1e-12)


def test_config_validation():
    for alpha in (0.0, 1.0, 1.5, -0.1):
        with pytest.raises(ArgumentError):
            LossConfig(alpha=alpha)
    with pytest.raises(ArgumentError):
        LossConfig(repulsion_mode="some")
    with pytest.raises(ArgumentError):
        LossConfig(norm_lambda=-1)


def test_matches_reference_port(rng):
    for _ in range(20):
        b, v, d = rng.integers(1, 5), rng.integers(2, 5), rng.integers(2, 17)
        feats = clustered_batch(rng, b, v, d, rng.uniform(0.01, 1.0))
        alpha = rng.uniform(0.3, 0.95)
        mine = hypersolid_loss(feats, LossConfig(alpha=alpha, norm_lambda=1e-3)).values()
        ref = reference_loss(feats, alpha, 1e-3)
        for key, r in zip(("alignment", "repulsion", "normalization", "total"), ref):
            assert mine[key] == pytest.approx(r, rel=1e-12, abs=1e-300)


def loss_grad(feats, cfg):
    tape = nd.Tape()
    v = tape.variable(feats)
    return tape.backward(hypersolid_loss(v, cfg).total)[v]


def test_gradient_matches_finite_differences(rng):
    cfg = LossConfig(alpha=0.8, norm_lambda=1e-2)
    for _ in range(10):
        feats = clustered_batch(rng, 2, 3, 5, 0.2)
        target = max_target(feats)
        num = numeric_grad(lambda x: reference_loss(x, 0.8, 1e-2, target)[3], feats)
        assert rel_err(loss_grad(feats, cfg), num) < 1e-4


def constant_target_alignment(v, feats_value):
    c = nd.rowwise_l2_normalize(np.max(feats_value, axis=1, keepdims=True))
    x = nd.rowwise_l2_normalize(v)
    return nd.mean(nd.sub(1.0, nd.sum_(nd.mul(x, c), axis=2)))


def test_stop_gradient_feats(rng):
    feats = rng.standard_normal((3, 4, 6))
    tape = nd.Tape()
    v = tape.variable(feats)
    g1 = tape.backward(alignment_loss(v))[v]
    tape2 = nd.Tape()
    v2 = tape2.variable(feats)
    g2 = tape2.backward(constant_target_alignment(v2, feats))[v2]
    assert np.max(np.abs(g1 - g2)) < 1e-12


def test_stop_gradient_through_encoder(rng):
    params = model.init(model.EncoderConfig(8, [16], 6), seed=3)
    batch = rng.standard_normal((2, 3, 8))

    def grads(use_constant):
        tape = nd.Tape()
        pv = [tape.variable(a) for a in params.arrays()]
        feats = model.forward(pv, tape.constant(batch))
        loss = constant_target_alignment(feats, feats.value) if use_constant else alignment_loss(feats)
        g = tape.backward(loss)
        return [g[p] for p in pv]

    for a, b in zip(grads(False), grads(True)):
        assert np.max(np.abs(a - b)) < 1e-12


def test_sparsity_below_threshold(rng):
    alpha = 0.7
    feats = clustered_batch(rng, 3, 3, 6, 0.4)
    b, v, d = feats.shape
    m = b * v
    sims = cosine_matrix(feats)
    tape = nd.Tape()
    x = tape.variable(feats)
    base = tape.backward(repulsion_loss(x, alpha))[x]
    below = [(i, j) for i in range(m) for j in range(i + 1, m) if sims[i, j] < alpha - 1e-6]
    assert below
    for i, j in below:
        mask = pair_mask(b, v)
        mask[i, j] = mask[j, i] = 0.0
        t2 = nd.Tape()
        x2 = t2.variable(feats)
        g = t2.backward(repulsion_loss(x2, alpha, mask=mask))[x2]
        assert g.tobytes() == base.tobytes()


def test_no_gradient_when_all_pairs_below(rng):
    feats = np.eye(6)[None, :, :] + 0.01 * rng.standard_normal((1, 6, 6))
    tape = nd.Tape()
    x = tape.variable(feats)
    g = tape.backward(repulsion_loss(x, 0.9))[x]
    assert np.all(g == 0.0)


def test_repulsion_scale_invariant(rng):
    feats = clustered_batch(rng, 2, 4, 5, 0.1)
    base = f(repulsion_loss(feats, 0.8))
    for c in (1e-3, 0.5, 7.0, 1e4):
        assert f(repulsion_loss(c * feats, 0.8)) == pytest.approx(base, rel=1e-12)


@pytest.mark.parametrize("eps", [0.01, 0.02, 0.05])
def test_markov_bound_random_batches(rng, eps):
    for _ in range(50):
        feats = clustered_batch(rng, 4, 4, 8, rng.uniform(0.05, 1.0))
        alpha = 0.9
        m = feats.shape[0] * feats.shape[1]
        rep = f(repulsion_loss(feats, alpha))
        assert collision_fraction(feats, alpha + eps) <= markov_collision_bound(rep, alpha, eps, m) + 1e-12


def test_collision_fraction_hand():
    feats = np.array([[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    assert collision_fraction(feats, 0.5) == pytest.approx(2 / 6)
