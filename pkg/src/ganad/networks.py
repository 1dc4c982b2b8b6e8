"""Declarative dense networks with a feature tap, plus the binary checkpoint format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Tensor

MAGIC = b"GADN"
FORMAT_VERSION = 1

_ACT_CODES = {"none": 0, "relu": 1, "leaky_relu": 2, "sigmoid": 3, "tanh": 4}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "dense" or "activation"
    in_dim: int = 0
    out_dim: int = 0
    has_bias: bool = True
    activation: str = "none"
    alpha: float = 0.2


def dense(in_dim: int, out_dim: int, bias: bool = True) -> LayerSpec:
    return LayerSpec("dense", in_dim=in_dim, out_dim=out_dim, has_bias=bias)


def act(name: str, alpha: float = 0.2) -> LayerSpec:
    if name not in _ACT_CODES:
        raise ValueError(f"unknown activation {name!r}")
    return LayerSpec("activation", activation=name, alpha=alpha)


def validate(spec: Sequence[LayerSpec]) -> tuple[int, int]:
    """Check that dense widths chain; return (in_dim, out_dim)."""
    dims = [s for s in spec if s.kind == "dense"]
    if not dims:
        raise DimensionError("network needs at least one dense layer")
    for s in spec:
        if s.kind not in ("dense", "activation"):
            raise ValueError(f"unknown layer kind {s.kind!r}")
        if s.kind == "dense" and (s.in_dim < 1 or s.out_dim < 1):
            raise DimensionError(f"dense layer with non-positive dims {s.in_dim}->{s.out_dim}")
    for a, b in zip(dims, dims[1:]):
        if a.out_dim != b.in_dim:
            raise DimensionError(f"dense {a.in_dim}->{a.out_dim} followed by {b.in_dim}->{b.out_dim}")
    return dims[0].in_dim, dims[-1].out_dim


class Network:
    """A chain of dense and activation layers.

    ``feature_tap`` indexes ``layers``; the output right after that layer is
    what :meth:`forward_with_features` hands back as the feature vector.
    """

    def __init__(self, layers: Sequence[LayerSpec], params: list[tuple[Tensor, Tensor | None]],
                 feature_tap: int | None = None):
        self.layers = list(layers)
        self.in_dim, self.out_dim = validate(self.layers)
        self.params = params  # one (weight, bias) per dense layer, in order
        if feature_tap is None:
            feature_tap = len(self.layers) - 1
        if not 0 <= feature_tap < len(self.layers):
            raise IndexError(f"feature_tap {feature_tap} outside {len(self.layers)} layers")
        self.feature_tap = feature_tap

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in self.params:
            out.append(w)
            if b is not None:
                out.append(b)
        return out

    def parameter_count(self) -> int:
        return int(np.sum([p.size for p in self.parameters()]))

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def load_state(self, state: Sequence[np.ndarray]) -> None:
        params = self.parameters()
        if len(state) != len(params):
            raise ValueError("state does not match network parameters")
        for p, s in zip(params, state):
            if p.shape != s.shape:
                raise DimensionError(f"state shape {s.shape} vs parameter {p.shape}")
            p.data = np.array(s, dtype=np.float64, copy=True)

    def requires_grad_(self, flag: bool) -> Network:
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def _run(self, x, tap: int | None):
        x = T.as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(f"network expects [batch x {self.in_dim}], got {x.shape}")
        h = x
        features = None
        k = 0
        for i, spec in enumerate(self.layers):
            if spec.kind == "dense":
                w, b = self.params[k]
                k += 1
                h = T.matmul(h, w)
                if b is not None:
                    h = T.add_bias(h, b)
            elif spec.activation != "none":
                fn = T.ACTIVATIONS[spec.activation]
                h = fn(h, spec.alpha) if spec.activation == "leaky_relu" else fn(h)
            if i == tap:
                features = h
        return h, features

    def forward(self, x) -> Tensor:
        return self._run(x, None)[0]

    __call__ = forward

    def forward_with_features(self, x) -> tuple[Tensor, Tensor]:
        return self._run(x, self.feature_tap)

    def copy(self) -> Network:
        params = [(Tensor(w.data.copy(), requires_grad=w.requires_grad),
                   None if b is None else Tensor(b.data.copy(), requires_grad=b.requires_grad))
                  for w, b in self.params]
        return Network(self.layers, params, self.feature_tap)


def build(spec: Sequence[LayerSpec], seed: int | np.random.Generator,
          feature_tap: int | None = None) -> Network:
    """Materialize parameters: Glorot-uniform weights, zero biases."""
    validate(spec)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = []
    for s in spec:
        if s.kind != "dense":
            continue
        bound = np.sqrt(6.0 / (s.in_dim + s.out_dim))
        w = Tensor(rng.uniform(-bound, bound, size=(s.in_dim, s.out_dim)), requires_grad=True)
        b = Tensor(np.zeros(s.out_dim), requires_grad=True) if s.has_bias else None
        params.append((w, b))
    return Network(spec, params, feature_tap)


def sample_latent(batch: int, dim: int, rng: np.random.Generator) -> Tensor:
    if batch < 1 or dim < 1:
        raise ValueError("batch and dim must be >= 1")
    return Tensor(rng.standard_normal((batch, dim)))


# ---------------------------------------------------------------- architectures

def mlp(in_dim: int, hidden: Sequence[int], out_dim: int, out_act: str = "none",
        hidden_act: str = "leaky_relu", alpha: float = 0.2,
        first_act: bool = True) -> list[LayerSpec]:
    """dense/activation stack. ``first_act=False`` drops the first hidden activation."""
    spec: list[LayerSpec] = []
    prev = in_dim
    for i, h in enumerate(hidden):
        spec.append(dense(prev, h))
        if i > 0 or first_act:
            spec.append(act(hidden_act, alpha))
        prev = h
    spec.append(dense(prev, out_dim))
    if out_act != "none":
        spec.append(act(out_act, alpha))
    return spec


def generator_spec(latent_dim: int, out_dim: int, hidden: Sequence[int] = (128,)) -> list[LayerSpec]:
    return mlp(latent_dim, hidden, out_dim, out_act="tanh")


def discriminator_spec(in_dim: int, hidden: Sequence[int] = (128,)) -> tuple[list[LayerSpec], int]:
    """Returns the spec and the feature tap (last hidden activation)."""
    spec = mlp(in_dim, hidden, 1, out_act="sigmoid")
    return spec, len(spec) - 3


def encoder_spec(in_dim: int, latent_dim: int, hidden: Sequence[int] = (128,),
                 first_layer_activation: bool = True) -> list[LayerSpec]:
    return mlp(in_dim, hidden, latent_dim, first_act=first_layer_activation)


# ---------------------------------------------------------------- checkpoints

def save(net: Network, path: str | Path) -> None:
    """Write ``net`` in the GADN layout (all integers little-endian).

    header: magic, u32 version, u32 layer count, i32 feature tap
    dense: u8 0, u32 in, u32 out, u8 has_bias, f64 weights (row-major), f64 bias
    activation: u8 1, u8 activation code, f64 alpha
    """
    chunks = [MAGIC, struct.pack("<IIi", FORMAT_VERSION, len(net.layers), net.feature_tap)]
    k = 0
    for s in net.layers:
        if s.kind == "dense":
            w, b = net.params[k]
            k += 1
            chunks.append(struct.pack("<BIIB", 0, s.in_dim, s.out_dim, int(b is not None)))
            chunks.append(np.ascontiguousarray(w.data, dtype="<f8").tobytes())
            if b is not None:
                chunks.append(np.ascontiguousarray(b.data, dtype="<f8").tobytes())
        else:
            chunks.append(struct.pack("<BBd", 1, _ACT_CODES[s.activation], s.alpha))
    Path(path).write_bytes(b"".join(chunks))


class CheckpointError(ValueError):
    pass


def load(path: str | Path) -> Network:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    pos = 4

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise CheckpointError(f"{path}: truncated")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    def take_f64(n: int) -> np.ndarray:
        nonlocal pos
        if pos + 8 * n > len(buf):
            raise CheckpointError(f"{path}: truncated")
        arr = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).astype(np.float64)
        pos += 8 * n
        return arr

    version, n_layers, tap = take("<IIi")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    layers, params = [], []
    for _ in range(n_layers):
        (kind,) = take("<B")
        if kind == 0:
            i, o, has_b = take("<IIB")
            w = take_f64(i * o).reshape(i, o)
            b = take_f64(o) if has_b else None
            layers.append(dense(i, o, bool(has_b)))
            params.append((Tensor(w, requires_grad=True),
                           None if b is None else Tensor(b, requires_grad=True)))
        elif kind == 1:
            code, alpha = take("<Bd")
            layers.append(LayerSpec("activation", activation=_ACT_NAMES[code], alpha=alpha))
        else:
            raise CheckpointError(f"{path}: unknown layer kind {kind}")
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return Network(layers, params, tap)
