"""Dense float64 tensors with reverse-mode automatic differentiation, plus Adam.

Every op records its parents and a backward function mapping the output gradient to
one gradient per parent. Tensors that do not depend on a trainable leaf record no
parents, so constant sub-graphs are never traversed by backward().
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from src.errors import NonScalarLoss, ShapeMismatch

LAYER_NORM_EPS = 1e-5

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from e


class Tensor:
    """A node of the computation graph holding a float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple[Tensor, ...] = (),
        backward: BackwardFn | None = None,
        op: str = "leaf",
    ) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward = backward

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(()))

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn, op: str) -> Tensor:
        if not np.all(np.isfinite(data)):
            raise FloatingPointError(f"{op} produced a non-finite value")
        if any(p.requires_grad for p in parents):
            return Tensor(data, requires_grad=True, parents=parents, backward=backward, op=op)
        return Tensor(data, op=op)

    @staticmethod
    def _lift(value) -> Tensor:
        return value if isinstance(value, Tensor) else Tensor(value)

    # -- elementwise arithmetic --------------------------------------------

    def __add__(self, other) -> Tensor:
        other = self._lift(other)
        _broadcast_shape(self, other, "add")
        a_shape, b_shape = self.shape, other.shape
        return self._result(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
            "add",
        )

    __radd__ = __add__

    def __sub__(self, other) -> Tensor:
        other = self._lift(other)
        _broadcast_shape(self, other, "sub")
        a_shape, b_shape = self.shape, other.shape
        return self._result(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
            "sub",
        )

    def __rsub__(self, other) -> Tensor:
        return self._lift(other) - self

    def __mul__(self, other) -> Tensor:
        other = self._lift(other)
        _broadcast_shape(self, other, "mul")
        a, b = self.data, other.data
        return self._result(
            a * b,
            (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> Tensor:
        other = self._lift(other)
        _broadcast_shape(self, other, "div")
        a, b = self.data, other.data
        return self._result(
            a / b,
            (self, other),
            lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)),
            "div",
        )

    def __neg__(self) -> Tensor:
        return self._result(-self.data, (self,), lambda g: (-g,), "neg")

    def __matmul__(self, other) -> Tensor:
        other = self._lift(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise ShapeMismatch(f"matmul: incompatible shapes {self.shape} @ {other.shape}")
        a, b = self.data, other.data
        return self._result(a @ b, (self, other), lambda g: (g @ b.T, a.T @ g), "matmul")

    def __getitem__(self, index) -> Tensor:
        shape = self.shape

        def backward(g: np.ndarray):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return self._result(self.data[index], (self,), backward, "slice")

    # -- unary ops ------------------------------------------------------------

    def exp(self) -> Tensor:
        out = np.exp(self.data)
        return self._result(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> Tensor:
        x = self.data
        return self._result(np.log(x), (self,), lambda g: (g / x,), "log")

    def abs(self) -> Tensor:
        x = self.data
        return self._result(np.abs(x), (self,), lambda g: (g * np.sign(x),), "abs")

    def leaky_relu(self, negative_slope: float = 0.01) -> Tensor:
        positive = self.data > 0
        return self._result(
            np.where(positive, self.data, negative_slope * self.data),
            (self,),
            lambda g: (g * np.where(positive, 1.0, negative_slope),),
            "leaky_relu",
        )

    def maximum(self, floor: float) -> Tensor:
        """Elementwise max with a constant; gradient flows only where the input wins."""
        above = self.data > floor
        return self._result(np.maximum(self.data, floor), (self,), lambda g: (g * above,), "maximum")

    def transpose(self) -> Tensor:
        if self.ndim != 2:
            raise ShapeMismatch(f"transpose expects a matrix, got shape {self.shape}")
        return self._result(self.data.T, (self,), lambda g: (g.T,), "transpose")

    @property
    def T(self) -> Tensor:
        return self.transpose()

    def reshape(self, *shape) -> Tensor:
        old = self.shape
        try:
            out = self.data.reshape(*shape)
        except ValueError as e:
            raise ShapeMismatch(f"reshape: cannot reshape {old} to {shape}") from e
        return self._result(out, (self,), lambda g: (g.reshape(old),), "reshape")

    # -- reductions -------------------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        shape = self.shape

        def backward(g: np.ndarray):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return self._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward, "sum")

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        count = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: int = 0, keepdims: bool = False) -> Tensor:
        """Max along `axis`; the gradient goes to the first maximal entry."""
        shape = self.shape
        index = np.expand_dims(np.argmax(self.data, axis=axis), axis)
        out = np.take_along_axis(self.data, index, axis=axis)

        def backward(g: np.ndarray):
            if not keepdims:
                g = np.expand_dims(g, axis)
            full = np.zeros(shape)
            np.put_along_axis(full, index, g, axis=axis)
            return (full,)

        return self._result(out if keepdims else np.squeeze(out, axis=axis), (self,), backward, "max")

    def l2_norm(self, axis: int = -1, keepdims: bool = False) -> Tensor:
        x = self.data
        norm = np.sqrt((x * x).sum(axis=axis, keepdims=True))

        def backward(g: np.ndarray):
            if not keepdims:
                g = np.expand_dims(g, axis)
            safe = np.where(norm > 0, norm, 1.0)
            return (g * np.where(norm > 0, x / safe, 0.0),)

        return self._result(norm if keepdims else np.squeeze(norm, axis=axis), (self,), backward, "l2_norm")

    # -- normalizations ---------------------------------------------------------

    def softmax(self) -> Tensor:
        """Softmax over the last axis."""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=-1, keepdims=True)
        return self._result(
            s,
            (self,),
            lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),),
            "softmax",
        )

    def layer_norm(self, eps: float = LAYER_NORM_EPS) -> Tensor:
        """Normalize the last axis to zero mean and unit variance (no affine part)."""
        x = self.data
        n = x.shape[-1]
        mu = x.mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + eps)
        xhat = (x - mu) * inv

        def backward(g: np.ndarray):
            return (
                inv / n * (n * g - g.sum(axis=-1, keepdims=True) - xhat * (g * xhat).sum(axis=-1, keepdims=True)),
            )

        return self._result(xhat, (self,), backward, "layer_norm")

    # -- backward -----------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into `.grad` of every trainable leaf."""
        if self.size != 1:
            raise NonScalarLoss(f"backward() needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            return

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeMismatch(f"concat: incompatible shapes {[t.shape for t in tensors]}") from e
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return Tensor._result(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def grad(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar `loss` for every named parameter (zeros if unused)."""
    for p in params.values():
        p.grad = None
    loss.backward()
    return {name: p.grad if p.grad is not None else np.zeros_like(p.data) for name, p in params.items()}


# -- layers ----------------------------------------------------------------------------


def init_linear(
    params: dict[str, Tensor],
    prefix: str,
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator,
) -> None:
    """Add `{prefix}.weight` and `{prefix}.bias`, uniform in +-1/sqrt(fan_in)."""
    bound = 1.0 / math.sqrt(fan_in)
    params[f"{prefix}.weight"] = parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    params[f"{prefix}.bias"] = parameter(rng.uniform(-bound, bound, size=(fan_out,)))


def linear(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    return x @ params[f"{prefix}.weight"] + params[f"{prefix}.bias"]


# -- optimizer -------------------------------------------------------------------------


@dataclass
class AdamState:
    """Adam moment estimates, keyed by parameter name."""
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """Apply one bias-corrected Adam update to `params` in place."""
    for name, p in params.items():
        if name not in grads:
            raise ShapeMismatch(f"missing gradient for parameter {name}")
        if grads[name].shape != p.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {grads[name].shape}, parameter {p.shape}")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment.get(name, np.zeros_like(p.data))
        v = state.second_moment.get(name, np.zeros_like(p.data))
        if m.shape != p.shape:
            raise ShapeMismatch(f"Adam state for {name} has shape {m.shape}, parameter {p.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        p.data = p.data - state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return state


def parameter_count(params: Iterable[Tensor]) -> int:
    return sum(p.size for p in params)
