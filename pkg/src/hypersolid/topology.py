"""Energy profiles along latent interpolation paths, and feature inversion."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import model
from . import ndtensor as nd
from .errors import ArgumentError, NumericError
from .geometry import sample_pairs
from .optim import AdamW
from .views import EmbeddingSet, resize


@dataclass
class WalkProfile:
    t: np.ndarray
    pos_mean: np.ndarray
    pos_std: np.ndarray
    neg_mean: np.ndarray
    neg_std: np.ndarray
    energies: np.ndarray  # n_pairs x (S + 1)
    same_class: np.ndarray  # bool per pair

    @property
    def n_pos(self) -> int:
        return int(self.same_class.sum())

    @property
    def n_neg(self) -> int:
        return int((~self.same_class).sum())

    def peak_energy(self) -> np.ndarray:
        return self.energies.max(axis=1)


def nearest_energy(points: np.ndarray, reference: np.ndarray,
                   exclude: np.ndarray | None = None, chunk: int = 2048,
                   return_index: bool = False):
    """``min_r (1 - cos(p, r))`` for every row ``p`` of ``points``.

    ``exclude`` optionally lists, per point, reference rows to skip (shape
    n_points x k, entries -1 ignored). With ``return_index`` the index of
    the nearest reference row (first on ties) is returned as well.
    """
    p = np.asarray(nd.rowwise_l2_normalize(np.asarray(points, dtype=np.float64)))
    r = np.asarray(nd.rowwise_l2_normalize(np.asarray(reference, dtype=np.float64)))
    out = np.empty(len(p))
    idx = np.empty(len(p), dtype=np.int64)
    for i in range(0, len(p), chunk):
        sims = p[i:i + chunk] @ r.T
        if exclude is not None:
            ex = exclude[i:i + chunk]
            rows = np.repeat(np.arange(len(ex)), ex.shape[1])
            cols = ex.ravel()
            keep = cols >= 0
            sims[rows[keep], cols[keep]] = -np.inf
        best = sims.argmax(axis=1)
        idx[i:i + chunk] = best
        out[i:i + chunk] = 1.0 - sims[np.arange(len(sims)), best]
    out = np.clip(out, 0.0, 2.0)
    return (out, idx) if return_index else out


def energy_walk(reference: EmbeddingSet, pairs, steps: int = 20,
                exclude_endpoints: bool = False,
                endpoints: EmbeddingSet | None = None) -> WalkProfile:
    """Walk linearly from ``z_i`` to ``z_j`` for each pair ``(i, j)``.

    Points are ``(1 - t) z_i + t z_j`` on ``steps + 1`` evenly spaced ``t``
    in [0, 1], interpolated in the raw embedding space. Energy is the cosine
    distance to the nearest row of ``reference``. Pair indices point into
    ``endpoints`` (default: the reference set itself). Pairs with equal
    labels are positive walks; others are negative. Without labels every
    walk counts as negative.
    """
    if steps < 2:
        raise ArgumentError("steps must be >= 2")
    z = np.asarray(reference.vectors, dtype=np.float64)
    if len(z) == 0:
        raise ArgumentError("reference set is empty")
    ends = reference if endpoints is None else endpoints
    e = np.asarray(ends.vectors, dtype=np.float64)
    if e.ndim != 2 or e.shape[1] != z.shape[1]:
        raise ArgumentError("endpoint and reference dimensions differ")
    if exclude_endpoints and endpoints is not None:
        raise ArgumentError("exclude_endpoints needs endpoints drawn from the reference set")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= len(e)):
        raise ArgumentError("pair index out of range")
    t = np.linspace(0.0, 1.0, steps + 1)
    a, b = e[pairs[:, 0]], e[pairs[:, 1]]
    pts = (1.0 - t)[None, :, None] * a[:, None, :] + t[None, :, None] * b[:, None, :]
    flat = pts.reshape(-1, z.shape[1])
    exclude = None
    if exclude_endpoints:
        exclude = np.repeat(pairs, steps + 1, axis=0)
    energies = nearest_energy(flat, z, exclude).reshape(len(pairs), steps + 1)
    if ends.labels is not None:
        same = ends.labels[pairs[:, 0]] == ends.labels[pairs[:, 1]]
    else:
        same = np.zeros(len(pairs), dtype=bool)

    def stats(mask):
        if not mask.any():
            nan = np.full(steps + 1, np.nan)
            return nan, nan.copy()
        e = energies[mask]
        return e.mean(axis=0), e.std(axis=0)

    pm, ps = stats(same)
    nm, ns = stats(~same)
    return WalkProfile(t, pm, ps, nm, ns, energies, same)


def walk_pairs(labels: np.ndarray, n_pos: int, n_neg: int, seed: int = 0) -> np.ndarray:
    """Random same-class and different-class index pairs, stacked (positives first)."""
    pi, pj = sample_pairs(labels, len(labels), n_pos, seed, "positive")
    ni, nj = sample_pairs(labels, len(labels), n_neg, seed, "negative")
    return np.concatenate([np.stack([pi, pj], 1), np.stack([ni, nj], 1)])


def write_walks_csv(path, profile: WalkProfile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "pos_mean", "pos_std", "neg_mean", "neg_std"])
        for row in zip(profile.t, profile.pos_mean, profile.pos_std,
                       profile.neg_mean, profile.neg_std):
            w.writerow([repr(float(x)) for x in row])


# ---------------------------------------------------------------------------
# feature inversion


@dataclass
class InversionConfig:
    scales: list[float] = field(default_factory=lambda: [0.125, 0.25, 0.5, 0.75, 1.0])
    steps_per_scale: int = 4000
    lr: float = 0.05
    tv_weight: float = 2.0
    jitter_max: int = 32
    smooth_every: int = 50
    smooth_sigma: float = 0.5
    init_std: float = 0.01
    tol: float | None = None  # stop a scale early once the content distance drops below

    def __post_init__(self):
        s = list(self.scales)
        if not s or any(b <= a for a, b in zip(s, s[1:])) or s[-1] != 1.0 or s[0] <= 0:
            raise ArgumentError("scales must be positive, strictly increasing and end at 1.0")
        if self.steps_per_scale < 1:
            raise ArgumentError("steps_per_scale must be >= 1")


@dataclass
class InversionResult:
    x: np.ndarray
    distance: float
    scale_distances: list[tuple[float, int, float]]  # (scale, steps run, distance)


def total_variation(x):
    """Anisotropic TV, sum of absolute vertical and horizontal forward differences.

    Works on arrays and tape variables; 1-D inputs have no grid structure and
    give 0.
    """
    xv = nd._val(x)
    if xv.ndim < 2:
        return nd.scale(nd.sum_(x), 0.0) if isinstance(x, nd.Var) else np.asarray(0.0)
    return nd.add(nd.sum_(nd.abs_(nd.diff(x, axis=-2))), nd.sum_(nd.abs_(nd.diff(x, axis=-1))))


def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Linear-interpolation operator (n_out x n_in), half-pixel aligned."""
    if n_out == n_in:
        return np.eye(n_in)
    pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    w = pos - lo
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), lo] += 1.0 - w
    m[np.arange(n_out), hi] += w
    return m


def _cosine_distance(feat, target_unit: np.ndarray):
    f = nd.rowwise_l2_normalize(feat)
    return nd.sub(1.0, nd.sum_(nd.mul(f, target_unit)))


def invert(params: model.Parameters, target: np.ndarray, input_shape, cfg: InversionConfig | None = None,
           seed: int = 0) -> InversionResult:
    """Optimize an input so the frozen encoder maps it onto ``target``.

    ``input_shape`` is ``(P,)`` for vector encoders or ``(H, W)`` for grid
    encoders (flattened row-major before the first layer). Grid inversion
    runs the multi-scale schedule with jitter, TV and periodic blurring;
    vector inversion runs a single full-resolution stage with none of them.
    """
    cfg = cfg or InversionConfig()
    input_shape = tuple(int(s) for s in input_shape)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if int(np.prod(input_shape)) != params.config.input_dim:
        raise ArgumentError("input_shape does not match the encoder input dim")
    if target.shape[0] != params.config.projector_dim:
        raise ArgumentError("target dimension does not match the projector")
    t_unit = target / max(np.linalg.norm(target), nd.NORMALIZE_EPS)
    rng = np.random.default_rng(seed)
    weights = params.arrays()
    grid = len(input_shape) == 2
    scales = cfg.scales if grid else [1.0]
    opt = AdamW(lr=cfg.lr, weight_decay=0.0)

    canvas = None
    log = []
    for scale in scales:
        if grid:
            shape = (max(1, round(input_shape[0] * scale)), max(1, round(input_shape[1] * scale)))
            ry = _interp_matrix(input_shape[0], shape[0])
            rxt = _interp_matrix(input_shape[1], shape[1]).T
            jit = [min(round(cfg.jitter_max * scale), (n - 1) // 2) for n in shape]
        else:
            shape = input_shape
        if canvas is None:
            canvas = cfg.init_std * rng.standard_normal(shape)
        elif canvas.shape != shape:
            canvas = resize(canvas, shape, order=3)
        state = opt.init([canvas])
        steps_run = 0
        for step in range(cfg.steps_per_scale):
            tape = nd.Tape()
            c = tape.variable(canvas)
            if grid:
                shifted = c
                for axis, j in enumerate(jit):
                    if j > 0:
                        shifted = nd.roll(shifted, int(rng.integers(-j, j + 1)), axis)
                full = nd.matmul(nd.matmul(ry, shifted), rxt)
                x = nd.reshape(full, (1, -1))
            else:
                x = nd.reshape(c, (1, -1))
            content = _cosine_distance(model.forward(weights, x, check=False), t_unit)
            loss = nd.add(content, nd.scale(total_variation(c), cfg.tv_weight)) if grid else content
            grads = tape.backward(loss)
            (canvas,), state = opt.step([canvas], [grads[c]], state)
            steps_run = step + 1
            if grid and cfg.smooth_every and steps_run % cfg.smooth_every == 0:
                canvas = ndimage.gaussian_filter(canvas, cfg.smooth_sigma, truncate=2.0 / cfg.smooth_sigma,
                                                 mode="nearest")
            if not np.all(np.isfinite(canvas)):
                raise NumericError(f"non-finite canvas at scale {scale} step {steps_run}")
            if cfg.tol is not None and float(content.value.squeeze()) < cfg.tol:
                break
        dist = _final_distance(weights, canvas, input_shape, t_unit)
        log.append((float(scale), steps_run, dist))
    x = canvas
    return InversionResult(x, _final_distance(weights, x, input_shape, t_unit), log)


def _final_distance(weights, canvas, input_shape, t_unit) -> float:
    x = canvas
    if x.shape != input_shape:
        x = _interp_matrix(input_shape[0], x.shape[0]) @ x @ _interp_matrix(input_shape[1], x.shape[1]).T
    feat = model.forward(weights, x.reshape(1, -1))
    return float(np.asarray(_cosine_distance(feat, t_unit)).squeeze())


def write_inversion_log(path, result: InversionResult) -> None:
    with open(path, "w") as fh:
        for scale, steps, dist in result.scale_distances:
            fh.write(json.dumps({"scale": scale, "steps": steps, "distance": dist}) + "\n")
