"""Dense numpy arrays with a small reverse-mode differentiation tape.

Values are plain ``numpy.ndarray`` objects. Operations recorded on a
:class:`Tape` return :class:`Var` handles; the same functions called with
bare arrays (no ``Var`` among the arguments) just compute the value, so the
module doubles as a tape-free array toolkit.

Example
-------
>>> tape = Tape()
>>> x = tape.variable(np.array([[3.0, 4.0]]))
>>> y = mean(rowwise_l2_normalize(x))
>>> grads = tape.backward(y)
>>> grads[x].shape
(1, 2)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError

NORMALIZE_EPS = 1e-12

ArrayLike = "Var | np.ndarray | float"


@dataclass
class _Node:
    op: str
    inputs: tuple[int, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None
    needs_grad: bool


class Var:
    """Handle to a value recorded on a tape."""

    __slots__ = ("tape", "index", "value")
    __array_priority__ = 100.0

    def __init__(self, tape: "Tape", index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def T(self) -> "Var":
        return transpose(self)

    def __repr__(self) -> str:
        op = self.tape.nodes[self.index].op
        return f"Var(op={op!r}, shape={self.shape})"

    def __hash__(self) -> int:
        return hash((id(self.tape), self.index))

    def __eq__(self, other) -> bool:  # identity semantics, used as dict keys
        return isinstance(other, Var) and other.tape is self.tape and other.index == self.index

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a tape value is not supported")
        return scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


@dataclass
class Tape:
    """Append-only record of operations.

    Nodes are stored in insertion order, which is also a topological order;
    :meth:`backward` walks them strictly in reverse. A tape is meant to be
    used from one thread.
    """

    dtype: type = np.float64
    nodes: list[_Node] = field(default_factory=list)

    def _push(self, op, value, inputs=(), vjp=None, needs_grad=False) -> Var:
        self.nodes.append(_Node(op, tuple(inputs), vjp, needs_grad))
        return Var(self, len(self.nodes) - 1, value)

    def variable(self, value) -> Var:
        """Leaf that receives a gradient."""
        arr = np.array(value, dtype=self.dtype)
        return self._push("leaf", arr, needs_grad=True)

    def constant(self, value) -> Var:
        """Leaf that never receives a gradient."""
        arr = np.asarray(value)
        if arr.dtype.kind == "f" or arr.dtype.kind in "iub":
            arr = arr.astype(self.dtype, copy=False)
        return self._push("const", arr)

    def backward(self, output: Var, seed: np.ndarray | None = None) -> "Gradients":
        """Propagate adjoints from ``output`` to every node recorded before it."""
        if output.tape is not self:
            raise ValueError("output belongs to a different tape")
        adj: list[np.ndarray | None] = [None] * (output.index + 1)
        if seed is None:
            seed = np.ones_like(output.value)
        adj[output.index] = np.asarray(seed, dtype=output.value.dtype)
        for i in range(output.index, -1, -1):
            g = adj[i]
            node = self.nodes[i]
            if g is None or node.vjp is None or not node.needs_grad:
                continue
            for j, gj in zip(node.inputs, node.vjp(g)):
                if gj is None or not self.nodes[j].needs_grad:
                    continue
                adj[j] = gj if adj[j] is None else adj[j] + gj
        return Gradients(self, adj)


class Gradients:
    """Adjoints from one backward pass, indexed by :class:`Var`."""

    def __init__(self, tape: Tape, adjoints: list):
        self._tape = tape
        self._adj = adjoints

    def __getitem__(self, var: Var) -> np.ndarray:
        if var.tape is not self._tape:
            raise KeyError("variable belongs to a different tape")
        g = self._adj[var.index] if var.index < len(self._adj) else None
        return np.zeros_like(var.value) if g is None else g


# ---------------------------------------------------------------------------
# recording helpers


def _tape_of(*args) -> Tape | None:
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands live on different tapes")
    return tape


def _val(a) -> np.ndarray:
    return a.value if isinstance(a, Var) else np.asarray(a, dtype=float) if not isinstance(a, np.ndarray) else a


def _record(tape: Tape | None, op: str, value, args, vjp):
    if tape is None:
        return value
    inputs = []
    needs = False
    for a in args:
        v = a if isinstance(a, Var) else tape.constant(a)
        inputs.append(v.index)
        needs = needs or tape.nodes[v.index].needs_grad
    return tape._push(op, value, inputs, vjp, needs)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for array of rank {ndim}")
    return axis % ndim


def _broadcast_shape(a, b) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(np.shape(a), np.shape(b))
    except ValueError as exc:
        raise DimensionError(f"cannot combine shapes {np.shape(a)} and {np.shape(b)}") from exc


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    av, bv = _val(a), _val(b)
    _broadcast_shape(av, bv)
    sa, sb = av.shape, bv.shape
    return _record(_tape_of(a, b), "add", av + bv, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    av, bv = _val(a), _val(b)
    _broadcast_shape(av, bv)
    sa, sb = av.shape, bv.shape
    return _record(_tape_of(a, b), "sub", av - bv, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    av, bv = _val(a), _val(b)
    _broadcast_shape(av, bv)
    return _record(_tape_of(a, b), "mul", av * bv, (a, b),
                   lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a, c: float):
    """Multiply by a Python scalar."""
    return _record(_tape_of(a), "scale", _val(a) * c, (a,), lambda g: (g * c,))


def square(a):
    av = _val(a)
    return _record(_tape_of(a), "square", av * av, (a,), lambda g: (2.0 * av * g,))


def relu(a):
    av = _val(a)
    mask = av > 0
    return _record(_tape_of(a), "relu", np.where(mask, av, 0.0), (a,), lambda g: (g * mask,))


def tanh(a):
    y = np.tanh(_val(a))
    return _record(_tape_of(a), "tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def abs_(a):
    """Absolute value; the subgradient at zero is taken as zero."""
    av = _val(a)
    return _record(_tape_of(a), "abs", np.abs(av), (a,), lambda g: (g * np.sign(av),))


def stop_gradient(a):
    """Identity in value; blocks all adjoint flow to ``a``."""
    tape = _tape_of(a)
    if tape is None:
        return _val(a)
    return tape._push("stop_gradient", a.value, (a.index,), None, False)


# ---------------------------------------------------------------------------
# shape manipulation


def transpose(a, axes: tuple[int, ...] | None = None):
    av = _val(a)
    if axes is None:
        axes = tuple(reversed(range(av.ndim)))
    if sorted(axes) != list(range(av.ndim)):
        raise DimensionError(f"invalid axes {axes} for rank {av.ndim}")
    inv = tuple(np.argsort(axes))
    return _record(_tape_of(a), "transpose", np.transpose(av, axes), (a,),
                   lambda g: (np.transpose(g, inv),))


def reshape(a, shape: tuple[int, ...]):
    av = _val(a)
    try:
        out = av.reshape(shape)
    except ValueError as exc:
        raise DimensionError(str(exc)) from exc
    old = av.shape
    return _record(_tape_of(a), "reshape", out, (a,), lambda g: (g.reshape(old),))


def roll(a, shift: int, axis: int):
    av = _val(a)
    axis = _check_axis(axis, av.ndim)
    return _record(_tape_of(a), "roll", np.roll(av, shift, axis=axis), (a,),
                   lambda g: (np.roll(g, -shift, axis=axis),))


def diff(a, axis: int):
    """Forward difference ``a[i+1] - a[i]`` along ``axis``."""
    av = _val(a)
    axis = _check_axis(axis, av.ndim)
    if av.shape[axis] < 1:
        raise DimensionError("diff over an empty axis")

    def vjp(g):
        pad = [(0, 0)] * av.ndim
        pad[axis] = (1, 0)
        lo = np.pad(g, pad)
        pad[axis] = (0, 1)
        hi = np.pad(g, pad)
        return (lo - hi,)

    return _record(_tape_of(a), "diff", np.diff(av, axis=axis), (a,), vjp)


# ---------------------------------------------------------------------------
# reductions and products


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {av.shape} and {bv.shape}")
    if av.shape[1] != bv.shape[0]:
        raise DimensionError(f"inner dimensions differ: {av.shape} @ {bv.shape}")
    return _record(_tape_of(a, b), "matmul", av @ bv, (a, b),
                   lambda g: (g @ bv.T, av.T @ g))


def sum_(a, axis: int | None = None, keepdims: bool = False):
    av = _val(a)
    if axis is not None:
        axis = _check_axis(axis, av.ndim)
    shape = av.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(_tape_of(a), "sum", av.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis: int | None = None, keepdims: bool = False):
    av = _val(a)
    n = av.size if axis is None else av.shape[_check_axis(axis, av.ndim)]
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def max_over_axis(a, axis: int, keepdims: bool = False):
    """Maximum along ``axis``; the adjoint goes to the first argmax only."""
    av = _val(a)
    axis = _check_axis(axis, av.ndim)
    idx = np.expand_dims(np.argmax(av, axis=axis), axis)
    out = np.take_along_axis(av, idx, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        ga = np.zeros_like(av)
        np.put_along_axis(ga, idx, g, axis=axis)
        return (ga,)

    return _record(_tape_of(a), "max", out, (a,), vjp)


def l2_norm_rows(a):
    """Euclidean norm over the last axis."""
    av = _val(a)
    n = np.sqrt(np.sum(av * av, axis=-1))

    def vjp(g):
        safe = np.where(n > 0, n, 1.0)
        return (g[..., None] * np.where((n > 0)[..., None], av / safe[..., None], 0.0),)

    return _record(_tape_of(a), "l2_norm_rows", n, (a,), vjp)


def rowwise_l2_normalize(a, eps: float = NORMALIZE_EPS):
    """Divide each row (last axis) by ``max(norm, eps)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    av = _val(a)
    n = np.sqrt(np.sum(av * av, axis=-1, keepdims=True))
    d = np.maximum(n, eps)
    y = av / d
    clipped = n <= eps

    def vjp(g):
        proj = g - y * np.sum(g * y, axis=-1, keepdims=True)
        return (np.where(clipped, g, proj) / d,)

    return _record(_tape_of(a), "normalize", y, (a,), vjp)


def softmax_cross_entropy(logits, labels: np.ndarray):
    """Mean softmax cross-entropy of ``logits`` (N x K) against integer labels."""
    lv = _val(logits)
    if lv.ndim != 2 or len(labels) != lv.shape[0]:
        raise DimensionError("logits must be N x K with one label per row")
    shifted = lv - lv.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    n = lv.shape[0]
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def vjp(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return _record(_tape_of(logits), "softmax_xent", np.asarray(loss), (logits,), vjp)
