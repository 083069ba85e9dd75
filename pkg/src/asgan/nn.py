"""Dense generator/discriminator networks and the Adam optimizer."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import tensor as T
from .tensor import Tensor

ROLES = ("generator", "discriminator")
INIT_SCHEMES = ("xavier", "normal")


@dataclass(frozen=True)
class Layer:
    in_dim: int
    out_dim: int
    activation: str


@dataclass(frozen=True)
class NetworkSpec:
    """Layer-by-layer description of a dense network.

    A generator must end in ``tanh``; a discriminator must end in a single
    ``linear`` unit (the logit).
    """

    layers: Tuple[Layer, ...]
    role: str
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
        for layer in self.layers:
            if layer.in_dim < 1 or layer.out_dim < 1:
                raise ValueError(f"layer dims must be positive, got {layer}")
            if layer.activation not in T.ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
        last = self.layers[-1]
        if self.role == "generator" and last.activation != "tanh":
            raise ValueError("generator output activation must be tanh")
        if self.role == "discriminator" and (last.out_dim != 1 or last.activation != "linear"):
            raise ValueError("discriminator must end in a single linear logit")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def param_count(self) -> int:
        return sum(l.in_dim * l.out_dim + l.out_dim for l in self.layers)

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "leaky_slope": self.leaky_slope,
            "layers": [[l.in_dim, l.out_dim, l.activation] for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        layers = tuple(Layer(int(a), int(b), str(c)) for a, b, c in d["layers"])
        return cls(layers=layers, role=d["role"], leaky_slope=float(d.get("leaky_slope", 0.2)))


def mlp_spec(dims: Sequence[int], hidden_activation: str, output_activation: str,
             role: str, leaky_slope: float = 0.2) -> NetworkSpec:
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        act = output_activation if i == len(dims) - 2 else hidden_activation
        layers.append(Layer(int(a), int(b), act))
    return NetworkSpec(tuple(layers), role, leaky_slope)


def generator_spec(latent_dim: int, data_dim: int, hidden: Sequence[int] = (128, 128)) -> NetworkSpec:
    """ReLU hidden layers, tanh output."""
    return mlp_spec([latent_dim, *hidden, data_dim], "relu", "tanh", "generator")


def discriminator_spec(data_dim: int, hidden: Sequence[int] = (128, 128),
                       leaky_slope: float = 0.2) -> NetworkSpec:
    """LeakyReLU hidden layers, single logit output."""
    return mlp_spec([data_dim, *hidden, 1], "leaky_relu", "linear", "discriminator", leaky_slope)


@dataclass
class ParamSet:
    """Flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of shape ``(in, out)``."""

    arrays: List[np.ndarray]

    def __len__(self) -> int:
        return len(self.arrays)

    def __iter__(self):
        return iter(self.arrays)

    def __getitem__(self, i):
        return self.arrays[i]

    def count(self) -> int:
        return int(sum(a.size for a in self.arrays))

    def copy(self) -> "ParamSet":
        return ParamSet([a.copy() for a in self.arrays])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def as_tensors(self, requires_grad: bool = True) -> List[Tensor]:
        return [Tensor(a, requires_grad=requires_grad) for a in self.arrays]

    def equals(self, other: "ParamSet") -> bool:
        """Bitwise equality."""
        return len(self) == len(other) and all(
            a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in zip(self, other))


def init_params(spec: NetworkSpec, scheme: str = "xavier", seed: int = 0) -> ParamSet:
    """Draw weights per ``scheme``; biases start at zero.

    ``xavier`` is Glorot-uniform, ``U(-a, a)`` with ``a = sqrt(6/(fan_in+fan_out))``;
    ``normal`` is ``N(0, 0.02^2)``.
    """
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"init scheme must be one of {INIT_SCHEMES}, got {scheme!r}")
    rng = np.random.default_rng(seed)
    arrays = []
    for layer in spec.layers:
        shape = (layer.in_dim, layer.out_dim)
        if scheme == "xavier":
            a = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
            w = rng.uniform(-a, a, size=shape)
        else:
            w = rng.normal(0.0, 0.02, size=shape)
        arrays.append(w)
        arrays.append(np.zeros(layer.out_dim))
    return ParamSet(arrays)


Weights = Union[ParamSet, Sequence[Tensor], Sequence[np.ndarray]]


def forward(spec: NetworkSpec, params: Weights, x, activation_fn=None) -> Tensor:
    """Evaluate the network on a batch ``x`` of shape ``(n, in_dim)``.

    ``params`` may hold plain arrays (treated as constants) or tensors;
    gradients flow to whichever tensors require them.
    """
    x = T.as_tensor(x)
    if x.values.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ValueError(f"input must have shape (n, {spec.in_dim}), got {x.shape}")
    if len(params) != 2 * len(spec.layers):
        raise ValueError(f"expected {2 * len(spec.layers)} parameter arrays, got {len(params)}")
    act = activation_fn or T.activation
    h = x
    for i, layer in enumerate(spec.layers):
        w, b = T.as_tensor(params[2 * i]), T.as_tensor(params[2 * i + 1])
        if w.shape != (layer.in_dim, layer.out_dim) or b.shape != (layer.out_dim,):
            raise ValueError(f"layer {i}: parameter shapes {w.shape}, {b.shape} "
                             f"do not match {layer}")
        h = act(layer.activation, T.linear(h, w, b), spec.leaky_slope)
    return h


def predict(spec: NetworkSpec, params: Weights, x: np.ndarray) -> np.ndarray:
    """Untraced forward pass returning a plain array."""
    return forward(spec, [np.asarray(p.values if isinstance(p, Tensor) else p) for p in params], x).values


# -- Adam -----------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float
    beta1: float = 0.5
    beta2: float = 0.999
    eps_hat: float = 1e-8
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params: ParamSet, lr: float, beta1: float = 0.5,
                   beta2: float = 0.999, eps_hat: float = 1e-8) -> "AdamState":
        return cls(lr, beta1, beta2, eps_hat,
                   [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params: ParamSet, grads: Sequence[Optional[np.ndarray]],
              direction: str = "descent") -> ParamSet:
    """Apply one bias-corrected Adam update to ``params`` in place and return it.

    ``direction="ascent"`` runs descent on the negated gradient.
    """
    if direction not in ("ascent", "descent"):
        raise ValueError(f"direction must be 'ascent' or 'descent', got {direction!r}")
    if len(grads) != len(params) or any(g is None for g in grads):
        raise ValueError("adam_step needs a gradient for every parameter array")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ValueError(f"grad {i} has shape {g.shape}, parameter has {params[i].shape}")
        if direction == "ascent":
            g = -g
        m, v = state.m[i], state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += state.eps_hat
        params.arrays[i] = params.arrays[i] - state.lr * (m / c1) / denom
    return params


# -- checkpoint container -----------------------------------------------------------------

MAGIC = b"ASGAN-PARAMS-v1"


def save_params(path, params: ParamSet, spec: Optional[NetworkSpec] = None,
                meta: Optional[dict] = None) -> None:
    """Write the versioned binary container.

    Layout (little-endian): magic, u32 metadata length, UTF-8 JSON metadata,
    u32 array count, then per array u32 ndim, ndim x u32 dims, raw f64 payload.
    """
    info = dict(meta or {})
    if spec is not None:
        info["spec"] = spec.to_dict()
    blob = json.dumps(info, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(blob)), blob, struct.pack("<I", len(params))]
    for a in params:
        a = np.ascontiguousarray(a, dtype="<f8")
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_params(path) -> Tuple[ParamSet, Optional[NetworkSpec], dict]:
    """Read a container written by :func:`save_params`."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise ValueError(f"{path}: truncated at offset {pos}, needed {n} more bytes, "
                             f"file has {len(data)}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (mlen,) = struct.unpack("<I", take(4))
    info = json.loads(take(mlen).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(dims)) if ndim else 1
        arrays.append(np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(dims))
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes after offset {pos}")
    spec = NetworkSpec.from_dict(info.pop("spec")) if "spec" in info else None
    return ParamSet(arrays), spec, info
