"""Finite-difference validation of the autodiff engine on whole networks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import nn
from . import tensor as T
from .tensor import Tape, Tensor

FD_STEP = 1e-5
DENOM_FLOOR = 1e-8
TOLERANCE = 1e-4


@dataclass
class GradCheckReport:
    block_errors: List[float]
    n_params: int
    tolerance: float = TOLERANCE
    spec: Optional[dict] = None

    @property
    def max_rel_error(self) -> float:
        return max(self.block_errors) if self.block_errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def to_dict(self) -> dict:
        return {"max_rel_error": self.max_rel_error, "block_errors": self.block_errors,
                "n_params": self.n_params, "passed": self.passed, "spec": self.spec}


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = DENOM_FLOOR) -> float:
    """Max of ``|a - b| / max(|a|, |b|, floor)``."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def sabotaged_activation(kind: str, x: Tensor, alpha: float = 0.2) -> Tensor:
    """Like :func:`tensor.activation`, except tanh reports ``1 - y`` as its derivative."""
    if kind != "tanh":
        return T.activation(kind, x, alpha)
    y = np.tanh(x.values)
    return T._emit("tanh_bad", y, (x,), lambda g: (g * (1.0 - y),))


def _quadratic_loss(out: Tensor, target: np.ndarray) -> Tensor:
    r = T.sub(out, Tensor(target))
    return T.scale(T.total(T.mul(r, r)), 0.5 / out.shape[0])


def _loss_value(spec, arrays, x, target) -> float:
    r = nn.predict(spec, arrays, x) - target
    return 0.5 * float(np.sum(r * r)) / x.shape[0]


def grad_check(spec: nn.NetworkSpec, seed: int = 0, batch: int = 4,
               activation_fn: Optional[Callable] = None, h: float = FD_STEP,
               sabotage: bool = False) -> GradCheckReport:
    """Compare autodiff parameter gradients with central differences.

    The loss is ``0.5 * mean ||net(x) - t||^2`` on a random batch with inputs
    and targets in ``[-2, 2]``. The reference loss is evaluated with the plain
    forward pass, so a wrong adjoint cannot leak into it.
    """
    if sabotage:
        activation_fn = sabotaged_activation
    rng = np.random.default_rng(seed)
    params = nn.init_params(spec, "xavier", seed=int(rng.integers(2 ** 31)))
    # nonzero biases so every block is exercised
    for i in range(1, len(params), 2):
        params.arrays[i] = rng.uniform(-0.5, 0.5, params[i].shape)
    x = rng.uniform(-2, 2, (batch, spec.in_dim))
    target = rng.uniform(-2, 2, (batch, spec.out_dim))

    theta = params.as_tensors(True)
    with Tape() as tape:
        loss = _quadratic_loss(nn.forward(spec, theta, x, activation_fn), target)
    tape.backward(loss)

    errors = []
    arrays = [a.copy() for a in params]
    for tensor, arr in zip(theta, arrays):
        numeric = np.zeros_like(arr)
        flat, nflat = arr.reshape(-1), numeric.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            fp = _loss_value(spec, arrays, x, target)
            flat[j] = old - h
            fm = _loss_value(spec, arrays, x, target)
            flat[j] = old
            nflat[j] = (fp - fm) / (2 * h)
        errors.append(rel_error(tensor.grad, numeric))
    return GradCheckReport(errors, params.count(), spec=spec.to_dict())


def random_mlp_spec(rng: np.random.Generator, max_layers: int = 3, max_units: int = 64) -> nn.NetworkSpec:
    """A random small dense net with smooth or piecewise-linear hidden units."""
    n_layers = int(rng.integers(1, max_layers + 1))
    role = str(rng.choice(nn.ROLES))
    in_dim = int(rng.integers(1, 9))
    hidden = [int(rng.integers(1, max_units + 1)) for _ in range(n_layers - 1)]
    act = str(rng.choice(["relu", "leaky_relu", "tanh", "sigmoid"]))
    if role == "generator":
        return nn.mlp_spec([in_dim, *hidden, int(rng.integers(1, 5))], act, "tanh", role)
    return nn.mlp_spec([in_dim, *hidden, 1], act, "linear", role)


def random_suite(n_nets: int = 20, seed: int = 0) -> List[GradCheckReport]:
    rng = np.random.default_rng(seed)
    return [grad_check(random_mlp_spec(rng), seed=int(rng.integers(2 ** 31))) for _ in range(n_nets)]
