"""Shared MLP encoder with a linear projector head, plus checkpoint I/O.

Checkpoint layout (all integers little-endian)::

    b"HSCK1\\n"
    u32 header_bytes, then UTF-8 ``key=value`` lines
    u32 section_count
    per section: u16 name_bytes, name, u32 rows, u32 cols, u8 dtype (0=f32, 1=f64),
                 rows*cols row-major values

Weights are stored as ``layerK.weight`` (fan_in x fan_out) and biases as
``layerK.bias`` (1 x fan_out).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ndtensor as nd
from .errors import ArgumentError, FormatError, NumericError

CHECKPOINT_MAGIC = b"HSCK1\n"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


@dataclass
class EncoderConfig:
    input_dim: int = 64
    hidden_dims: list[int] = field(default_factory=lambda: [256, 256])
    projector_dim: int = 1024
    activation: str = "tanh"

    def __post_init__(self):
        self.hidden_dims = [int(h) for h in self.hidden_dims]
        if self.projector_dim < 2:
            raise ArgumentError("projector_dim must be >= 2")
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ArgumentError("layer sizes must be positive")
        if self.activation != "tanh":
            raise ArgumentError(f"unsupported activation {self.activation!r}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.projector_dim]


@dataclass
class Parameters:
    config: EncoderConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = None

    def arrays(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def replace(self, arrays: list[np.ndarray]) -> "Parameters":
        return Parameters(self.config, list(arrays[0::2]), list(arrays[1::2]), self.seed)

    def copy(self) -> "Parameters":
        return self.replace([a.copy() for a in self.arrays()])

    def checksum(self) -> str:
        h = hashlib.sha256()
        for a in self.arrays():
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def init(config: EncoderConfig, seed: int) -> Parameters:
    """LeCun-uniform weights (std 1/sqrt(fan_in)) and zero biases."""
    rng = np.random.default_rng(seed)
    dims = config.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Parameters(config, weights, biases, seed)


def forward(params, x, *, check: bool = True):
    """Encode a raw-input batch.

    ``params`` is either a :class:`Parameters` or the flat ``[W0, b0, ...]``
    list, whose entries may be tape variables. ``x`` has shape B x V x P,
    B x V x H x W or N x P; the output keeps the leading axes and replaces
    the input dims with the projector dim. The last layer is linear.
    """
    arrays = params.arrays() if isinstance(params, Parameters) else list(params)
    xv = x.value if isinstance(x, nd.Var) else np.asarray(x)
    in_dim = nd._val(arrays[0]).shape[0]
    lead = xv.shape[:2] if xv.ndim >= 3 else xv.shape[:1]
    if int(np.prod(xv.shape[len(lead):])) != in_dim:
        raise ArgumentError(f"input of shape {xv.shape} does not match encoder input dim {in_dim}")
    h = nd.reshape(x, (-1, in_dim))
    n_layers = len(arrays) // 2
    for k in range(n_layers):
        h = nd.add(nd.matmul(h, arrays[2 * k]), arrays[2 * k + 1])
        if k < n_layers - 1:
            h = nd.tanh(h)
        if check and not np.all(np.isfinite(nd._val(h))):
            raise NumericError(f"non-finite activation in layer{k}")
    out_dim = nd._val(arrays[-1]).shape[-1]
    return nd.reshape(h, (*lead, out_dim))


def encode(params: Parameters, data: np.ndarray, batch: int = 4096) -> np.ndarray:
    """Embeddings of un-augmented samples, N x D."""
    flat = data.reshape(len(data), -1)
    parts = [forward(params, flat[i:i + batch]) for i in range(0, len(flat), batch)]
    return np.concatenate(parts) if parts else np.zeros((0, params.config.projector_dim))


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: Parameters, header: dict | None = None, dtype: str = "f64") -> None:
    meta = {
        "encoder.input_dim": params.config.input_dim,
        "encoder.hidden_dims": ",".join(str(h) for h in params.config.hidden_dims),
        "encoder.projector_dim": params.config.projector_dim,
        "encoder.activation": params.config.activation,
        "encoder.seed": "" if params.seed is None else params.seed,
    }
    meta.update(header or {})
    text = "".join(f"{k}={v}\n" for k, v in meta.items()).encode()
    code = {"f32": 0, "f64": 1}[dtype]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        arrays = params.arrays()
        fh.write(struct.pack("<I", len(arrays)))
        for i, a in enumerate(arrays):
            name = f"layer{i // 2}.{'weight' if i % 2 == 0 else 'bias'}".encode()
            mat = a.reshape(1, -1) if a.ndim == 1 else a
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<IIB", mat.shape[0], mat.shape[1], code))
            fh.write(np.ascontiguousarray(mat, dtype=_DTYPES[code]).tobytes())


def load_checkpoint(path) -> tuple[Parameters, dict]:
    """Return the parameters and the full ``key=value`` header."""
    raw = Path(path).read_bytes()
    pos = len(CHECKPOINT_MAGIC)
    if raw[:pos] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise FormatError(f"{path}: truncated checkpoint")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    (hlen,) = struct.unpack("<I", take(4))
    try:
        lines = take(hlen).decode().splitlines()
        header = dict(ln.split("=", 1) for ln in lines if ln)
    except (UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed header") from exc
    (count,) = struct.unpack("<I", take(4))
    arrays = []
    for i in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        take(nlen)
        rows, cols, code = struct.unpack("<IIB", take(9))
        if code not in _DTYPES:
            raise FormatError(f"{path}: unknown dtype code {code}")
        dt = _DTYPES[code]
        a = np.frombuffer(take(rows * cols * dt.itemsize), dtype=dt).reshape(rows, cols)
        a = a.astype(np.float64)
        arrays.append(a[0] if i % 2 == 1 else a)
    if pos != len(raw):
        raise FormatError(f"{path}: trailing bytes after last section")
    try:
        hidden = header.get("encoder.hidden_dims", "")
        cfg = EncoderConfig(
            input_dim=int(header["encoder.input_dim"]),
            hidden_dims=[int(h) for h in hidden.split(",") if h],
            projector_dim=int(header["encoder.projector_dim"]),
            activation=header.get("encoder.activation", "tanh"),
        )
    except (KeyError, ValueError, ArgumentError) as exc:
        raise FormatError(f"{path}: incomplete encoder header") from exc
    if count != 2 * (len(cfg.layer_dims) - 1):
        raise FormatError(f"{path}: section count does not match encoder config")
    for k, (fi, fo) in enumerate(zip(cfg.layer_dims[:-1], cfg.layer_dims[1:])):
        if arrays[2 * k].shape != (fi, fo) or arrays[2 * k + 1].shape != (fo,):
            raise FormatError(f"{path}: layer{k} shape does not match encoder config")
    seed = header.get("encoder.seed", "")
    params = Parameters(cfg, arrays[0::2], arrays[1::2], int(seed) if seed else None)
    return params, header
