"""Hard-ball repulsion, feature-union alignment and the weak norm penalty.

All loss functions take a B x V x D batch of pre-normalization projector
outputs, either as a tape :class:`~hypersolid.ndtensor.Var` (the result is
recorded on the same tape) or as a plain array (the result is a float array).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndtensor as nd
from .errors import ArgumentError, DimensionError

REPULSION_MODES = ("all", "negatives-only", "positives-only")


@dataclass
class LossConfig:
    alpha: float = 0.9
    norm_lambda: float = 1e-6
    repulsion_mode: str = "all"
    use_repulsion: bool = True

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ArgumentError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.norm_lambda < 0:
            raise ArgumentError("norm_lambda must be >= 0")
        if self.repulsion_mode not in REPULSION_MODES:
            raise ArgumentError(f"repulsion_mode must be one of {REPULSION_MODES}")


@dataclass
class LossBreakdown:
    alignment: object
    repulsion: object
    normalization: object
    total: object

    def values(self) -> dict[str, float]:
        """Plain floats for logging."""
        f = lambda x: float(nd._val(x))  # noqa: E731
        return {"alignment": f(self.alignment), "repulsion": f(self.repulsion),
                "normalization": f(self.normalization), "total": f(self.total)}


def _shape3(feats) -> tuple[int, int, int]:
    shape = nd._val(feats).shape
    if len(shape) != 3:
        raise DimensionError(f"expected a B x V x D batch, got shape {shape}")
    return shape


def pair_mask(batch: int, views: int, mode: str = "all") -> np.ndarray:
    """M x M mask of the similarity entries that may repel; the diagonal is always 0."""
    m = batch * views
    if mode == "all":
        mask = np.ones((m, m))
    else:
        image = np.repeat(np.arange(batch), views)
        same = image[:, None] == image[None, :]
        if mode == "negatives-only":
            mask = (~same).astype(float)
        elif mode == "positives-only":
            mask = same.astype(float)
        else:
            raise ArgumentError(f"unknown repulsion mode {mode!r}")
    np.fill_diagonal(mask, 0.0)
    return mask


def cosine_matrix(feats) -> np.ndarray:
    """M x M cosine similarities of the flattened batch, diagonal zeroed."""
    x = np.asarray(nd._val(feats))
    x = x.reshape(-1, x.shape[-1])
    x = nd.rowwise_l2_normalize(x)
    sim = x @ x.T
    np.fill_diagonal(sim, 0.0)
    return sim


def repulsion_loss(feats, alpha: float = 0.9, mode: str = "all", mask: np.ndarray | None = None):
    """Mean over all M*M entries of ``relu(cos - alpha) / (1 - alpha)``.

    The diagonal is zeroed and kept in the mean, and each unordered pair is
    counted twice. Masked modes zero entries before the ReLU and keep the
    M*M divisor. An explicit M x M ``mask`` replaces the one implied by
    ``mode``; its diagonal is forced to zero.
    """
    b, v, d = _shape3(feats)
    m = b * v
    if m < 2:
        raise ArgumentError("repulsion needs at least two embeddings")
    if not 0 < alpha < 1:
        raise ArgumentError("alpha must lie in (0, 1)")
    x = nd.rowwise_l2_normalize(nd.reshape(feats, (m, d)))
    sim = nd.matmul(x, nd.transpose(x))
    if mask is None:
        mask = pair_mask(b, v, mode)
    else:
        if np.shape(mask) != (m, m):
            raise DimensionError(f"mask must be {m} x {m}")
        mask = np.array(mask, dtype=float)
        np.fill_diagonal(mask, 0.0)
    sim = nd.mul(sim, mask)
    hinge = nd.relu(nd.sub(sim, alpha))
    return nd.scale(nd.mean(hinge), 1.0 / (1.0 - alpha))


def alignment_loss(feats):
    """Mean cosine distance of each view to its image's max-pooled target.

    The target is the element-wise max over views of the raw features,
    normalized, and excluded from differentiation.
    """
    b, v, d = _shape3(feats)
    if v < 1:
        raise DimensionError("need at least one view")
    x = nd.rowwise_l2_normalize(feats)
    target = nd.max_over_axis(feats, axis=1, keepdims=True)
    c = nd.stop_gradient(nd.rowwise_l2_normalize(target))
    pos_sim = nd.sum_(nd.mul(x, c), axis=2)
    return nd.mean(nd.sub(1.0, pos_sim))


def normalization_loss(feats, norm_lambda: float = 1e-6):
    """``norm_lambda * (mean row norm - 1)**2``."""
    if norm_lambda < 0:
        raise ArgumentError("norm_lambda must be >= 0")
    _shape3(feats)
    dev = nd.sub(nd.mean(nd.l2_norm_rows(feats)), 1.0)
    return nd.scale(nd.square(dev), norm_lambda)


def hypersolid_loss(feats, cfg: LossConfig | None = None) -> LossBreakdown:
    cfg = cfg or LossConfig()
    align = alignment_loss(feats)
    if cfg.use_repulsion:
        rep = repulsion_loss(feats, cfg.alpha, cfg.repulsion_mode)
    else:
        rep = align.tape.constant(0.0) if isinstance(align, nd.Var) else np.asarray(0.0)
    norm = normalization_loss(feats, cfg.norm_lambda)
    total = nd.add(nd.add(align, rep), norm)
    return LossBreakdown(align, rep, norm, total)


# ---------------------------------------------------------------------------
# collision statistics


def collision_fraction(feats, threshold: float) -> float:
    """Fraction of ordered off-diagonal pairs with cosine above ``threshold``."""
    sim = cosine_matrix(feats)
    m = sim.shape[0]
    off = ~np.eye(m, dtype=bool)
    return float(np.mean(sim[off] > threshold))


def markov_collision_bound(repulsion: float, alpha: float, eps: float, m: int) -> float:
    """Upper bound on :func:`collision_fraction` at ``alpha + eps``.

    The loss averages over all M*M entries including the zeroed diagonal,
    while the collision fraction is over the M*M - M off-diagonal pairs,
    hence the extra ``M^2 / (M^2 - M)`` factor.
    """
    return repulsion * (1.0 - alpha) / eps * (m * m) / (m * m - m)
