"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded on it
whenever at least one operand requires a gradient. Outside a tape, or when
no operand requires a gradient, operations simply compute values, which
keeps evaluation passes cheap.

Example::

    w = Tensor(np.ones((2, 1)), requires_grad=True)
    with Tape() as tape:
        loss = bce_from_logits(x @ w, 1.0)
    tape.backward(loss)
    w.grad
"""

from __future__ import annotations

import threading
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

Number = Union[int, float]
Operand = Union["Tensor", Number]

_local = threading.local()


def _stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Optional["Tape"]:
    """Return the innermost tape active on this thread, if any."""
    stack = _stack()
    return stack[-1] if stack else None


class Tensor:
    """A float64 array that may carry a gradient.

    Attributes:
        values: The underlying ``float64`` array.
        requires_grad: Whether adjoints should be accumulated into ``grad``.
        grad: Adjoint of the last backward pass, or ``None``.
    """

    __slots__ = ("values", "requires_grad", "grad", "name", "_tape")

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return add(neg(self), other)

    def __mul__(self, other: Operand) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return self.__mul__(other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("name", "out", "inputs", "backward")

    def __init__(self, name: str, out: Tensor, inputs: Tuple[Tensor, ...],
                 backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.name = name
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of executed operations.

    Use as a context manager; nested tapes are allowed and the innermost one
    records. A tape and its tensors must stay on one thread.
    """

    def __init__(self) -> None:
        self.nodes: List[_Node] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:
            stack.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, name: str, out: Tensor, inputs: Tuple[Tensor, ...], backward) -> None:
        out._tape = self
        self.nodes.append(_Node(name, out, inputs, backward))

    def op_names(self) -> List[str]:
        return [n.name for n in self.nodes]

    def backward(self, loss: Tensor) -> List[str]:
        """Propagate adjoints from a scalar ``loss`` to every reachable tensor.

        Leaf gradients accumulate across calls; intermediate gradients are
        recomputed on every call. Returns the names of the visited ops in
        visiting order.
        """
        if loss.values.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.nodes:
            raise ValueError("backward on an empty tape")
        if loss._tape is not self:
            raise ValueError("loss was not produced on this tape")
        for node in self.nodes:
            node.out.grad = None
        loss.grad = np.ones_like(loss.values)
        visited = []
        for node in reversed(self.nodes):
            g = node.out.grad
            if g is None:
                continue
            visited.append(node.name)
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                inp.grad = gi if inp.grad is None else inp.grad + gi
        return visited

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.out.grad = None
            for inp in node.inputs:
                inp.grad = None

    def clear(self) -> None:
        """Reset every grad seen by this tape to absent and drop the record."""
        self.zero_grad()
        for node in self.nodes:
            node.out._tape = None
        self.nodes = []


def backward(loss: Tensor) -> List[str]:
    """Run the backward pass on the tape that produced ``loss``."""
    if loss._tape is None:
        raise ValueError("loss is not attached to a tape (was it computed inside `with Tape()`?)")
    return loss._tape.backward(loss)


def _emit(name: str, values: np.ndarray, inputs: Tuple[Tensor, ...], backward) -> Tensor:
    tape = active_tape()
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(values, requires_grad=needs)
    if needs and tape is not None:
        tape.record(name, out, inputs, backward)
    return out


# -- linear algebra -----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an ``m x k`` and a ``k x n`` tensor."""
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ValueError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    av, bv = a.values, b.values

    def back(g):
        ga = g @ bv.T if a.requires_grad else None
        gb = av.T @ g if b.requires_grad else None
        return ga, gb

    return _emit("matmul", av @ bv, (a, b), back)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused ``x @ w + b`` with ``b`` broadcast over rows."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.values.ndim != 2 or w.values.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"linear: cannot multiply {x.shape} by {w.shape}")
    if b.shape != (w.shape[1],):
        raise ValueError(f"linear: bias shape {b.shape} does not match {w.shape[1]} outputs")
    xv, wv = x.values, w.values
    out = xv @ wv
    out += b.values

    def back(g):
        gx = g @ wv.T if x.requires_grad else None
        gw = xv.T @ g if w.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return _emit("linear", out, (x, w, b), back)


# -- elementwise ----------------------------------------------------------------

def _check_pair(op: str, a: Tensor, b: Tensor) -> bool:
    """Return True when ``b`` is a row-broadcast bias for ``a``."""
    if a.shape == b.shape:
        return False
    if b.values.ndim == 1 and a.values.ndim == 2 and b.shape[0] == a.shape[1]:
        return True
    raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape} "
                     "(only equal shapes or a bias vector over rows are supported)")


def add(a: Operand, b: Operand) -> Tensor:
    if not isinstance(b, Tensor):
        if not isinstance(a, Tensor):
            raise TypeError("add needs at least one Tensor operand")
        c = float(b)
        return _emit("add", a.values + c, (a,), lambda g: (g,))
    if not isinstance(a, Tensor):
        return add(b, a)
    bias = _check_pair("add", a, b)

    def back(g):
        gb = None
        if b.requires_grad:
            gb = g.sum(axis=0) if bias else g
        return g, gb

    return _emit("add", a.values + b.values, (a, b), back)


def sub(a: Operand, b: Operand) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -float(b))
    if not isinstance(a, Tensor):
        return add(neg(b), a)
    bias = _check_pair("sub", a, b)

    def back(g):
        gb = None
        if b.requires_grad:
            gb = -(g.sum(axis=0) if bias else g)
        return g, gb

    return _emit("sub", a.values - b.values, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    bias = _check_pair("mul", a, b)
    av, bv = a.values, b.values

    def back(g):
        ga = g * bv if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = (g * av).sum(axis=0) if bias else g * av
        return ga, gb

    return _emit("mul", av * bv, (a, b), back)


def scale(x: Tensor, c: Number) -> Tensor:
    c = float(c)
    return _emit("scale", x.values * c, (x,), lambda g: (g * c,))


def neg(x: Tensor) -> Tensor:
    return _emit("neg", -x.values, (x,), lambda g: (-g,))


def total(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    shape = x.shape
    return _emit("sum", np.asarray(x.values.sum()), (x,),
                 lambda g: (np.full(shape, float(g)),))


def mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    return _emit("mean", np.asarray(x.values.mean()), (x,),
                 lambda g: (np.full(shape, float(g) / n),))


# -- activations ------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    v = x.values
    return _emit("relu", np.maximum(v, 0.0), (x,), lambda g: (g * (v > 0),))


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    """``x`` for ``x > 0`` else ``alpha * x``; the subgradient at 0 is ``alpha``."""
    v = x.values
    y = np.where(v > 0, v, alpha * v)

    def back(g):
        return (np.where(v > 0, g, alpha * g),)

    return _emit("leaky_relu", y, (x,), back)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.values)
    return _emit("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


_P_LO = np.finfo(np.float64).tiny
_P_HI = np.nextafter(1.0, 0.0)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # two-branch form avoids overflow of exp; the clamp keeps outputs inside
    # (0, 1) where float64 would round to an endpoint (|v| > ~36.7 above)
    e = np.exp(-np.abs(v))
    return np.clip(np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e)), _P_LO, _P_HI)


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.values)
    return _emit("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def softplus(x: Tensor) -> Tensor:
    return _emit("softplus", np.logaddexp(0.0, x.values), (x,),
                 lambda g: (g * _sigmoid(x.values),))


def log_sigmoid(x: Tensor) -> Tensor:
    """Elementwise ``log sigmoid(x) = -softplus(-x)``, stable for large |x|."""
    v = x.values
    return _emit("log_sigmoid", -np.logaddexp(0.0, -v), (x,),
                 lambda g: (g * _sigmoid(-v),))


ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid", "linear")


def activation(kind: str, x: Tensor, alpha: float = 0.2) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, alpha)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "linear":
        return x
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


# -- losses -------------------------------------------------------------------------

def bce_from_logits(logits: Tensor, target) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against ``target``.

    Computed as ``max(l, 0) - t*l + log1p(exp(-|l|))``, which is finite for
    any finite logit and keeps the tiny tail values (``l = 50, t = 1`` gives
    ``~1.9e-22`` rather than 0). ``target`` is normally a scalar 0 or 1; an array of the
    logits' shape is also accepted.
    """
    v = logits.values
    t = np.asarray(target, dtype=np.float64)
    n = v.size
    loss = np.maximum(v, 0.0) - t * v + np.log1p(np.exp(-np.abs(v)))

    def back(g):
        return (float(g) * (_sigmoid(v) - t) / n,)

    return _emit("bce_from_logits", np.asarray(loss.mean()), (logits,), back)
