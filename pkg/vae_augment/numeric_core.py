"""Dense float64 matrix ops with a reverse-mode gradient tape, Adam and a
finite-difference oracle.

Every matrix is a 2-D ``numpy.ndarray`` of dtype float64. Operations accept
either plain arrays (evaluated eagerly, nothing recorded) or :class:`Node`
handles from a :class:`GradTape`, in which case the result is recorded so
:func:`backward` can replay it in reverse.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

ActivationKind = Literal["tanh", "relu", "sigmoid"]
ACTIVATIONS: Tuple[str, ...] = ("tanh", "relu", "sigmoid")

Matrix = np.ndarray
Params = Dict[str, np.ndarray]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class NumericError(ArithmeticError):
    """Raised when an operation produces NaN or Inf."""


class ContractError(ValueError):
    """Raised when a caller violates an operation's precondition."""


def as_matrix(values: object, name: str = "matrix") -> Matrix:
    """Coerce ``values`` into a finite 2-D float64 array (vectors become one row)."""
    array = np.array(values, dtype=np.float64)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array.reshape(1, -1)
    elif array.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {array.shape}")
    _check_finite(array, name)
    return array


def _check_finite(value: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite value produced by {op}")


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

VectorJacobian = Callable[[np.ndarray], Sequence[Tuple[int, np.ndarray]]]


class Node:
    """Handle to one recorded value on a :class:`GradTape`."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: "GradTape", index: int, value: np.ndarray) -> None:
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def __matmul__(self, other: Operand) -> "Node":
        return matmul(self, other)  # type: ignore[return-value]

    def __rmatmul__(self, other: Operand) -> "Node":
        return matmul(other, self)  # type: ignore[return-value]

    def __add__(self, other: Operand) -> "Node":
        return add(self, other)  # type: ignore[return-value]

    __radd__ = __add__

    def __sub__(self, other: Operand) -> "Node":
        return sub(self, other)  # type: ignore[return-value]

    def __rsub__(self, other: Operand) -> "Node":
        return sub(other, self)  # type: ignore[return-value]

    def __mul__(self, other: Operand) -> "Node":
        return mul(self, other)  # type: ignore[return-value]

    __rmul__ = __mul__

    def __neg__(self) -> "Node":
        return scale(self, -1.0)  # type: ignore[return-value]

    def __repr__(self) -> str:
        return f"Node(index={self.index}, shape={self.value.shape})"


Operand = Union[Node, np.ndarray, float, int]


class GradTape:
    """Records primitive operations so the forward pass can be replayed in reverse."""

    def __init__(self) -> None:
        self._values: List[np.ndarray] = []
        self._vjps: List[Optional[VectorJacobian]] = []
        self._parameters: Dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._values)

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return tuple(self._parameters)

    def parameter(self, name: str, value: object) -> Node:
        if name in self._parameters:
            raise ContractError(f"parameter '{name}' registered twice")
        node = self._push(as_matrix(value, name), None)
        self._parameters[name] = node.index
        return node

    def constant(self, value: object) -> Node:
        return self._push(as_matrix(value, "constant"), None)

    def record(self, value: np.ndarray, op: str, vjp: VectorJacobian) -> Node:
        _check_finite(value, op)
        return self._push(value, vjp)

    def _push(self, value: np.ndarray, vjp: Optional[VectorJacobian]) -> Node:
        self._values.append(value)
        self._vjps.append(vjp)
        return Node(self, len(self._values) - 1, value)


def _tape_of(*operands: Operand) -> Optional[GradTape]:
    tape: Optional[GradTape] = None
    for operand in operands:
        if isinstance(operand, Node):
            if tape is not None and operand.tape is not tape:
                raise ContractError("operands belong to different tapes")
            tape = operand.tape
    return tape


def _lift(tape: GradTape, operand: Operand) -> Node:
    if isinstance(operand, Node):
        return operand
    return tape.constant(operand)


def _value(operand: Operand) -> np.ndarray:
    if isinstance(operand, Node):
        return operand.value
    return as_matrix(operand, "operand")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == (1, 1):
        return grad.sum().reshape(1, 1)
    if shape[0] == 1 and shape[1] == grad.shape[1]:
        return grad.sum(axis=0, keepdims=True)
    raise ShapeError(f"cannot reduce gradient of shape {grad.shape} to {shape}")


def _elementwise_shape(op: str, a: np.ndarray, b: np.ndarray) -> Tuple[int, int]:
    # same shape, a (1, c) row against (r, c), or a (1, 1) scalar
    if a.shape == b.shape:
        return a.shape  # type: ignore[return-value]
    for big, small in ((a, b), (b, a)):
        if small.shape == (1, 1):
            return big.shape  # type: ignore[return-value]
        if small.shape[0] == 1 and small.shape[1] == big.shape[1]:
            return big.shape  # type: ignore[return-value]
    raise ShapeError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------


def matmul(a: Operand, b: Operand) -> Union[Node, Matrix]:
    av, bv = _value(a), _value(b)
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
    out = av @ bv
    tape = _tape_of(a, b)
    if tape is None:
        _check_finite(out, "matmul")
        return out
    an, bn = _lift(tape, a), _lift(tape, b)
    return tape.record(
        out,
        "matmul",
        lambda g: ((an.index, g @ bn.value.T), (bn.index, an.value.T @ g)),
    )


def add(a: Operand, b: Operand) -> Union[Node, Matrix]:
    av, bv = _value(a), _value(b)
    _elementwise_shape("add", av, bv)
    out = av + bv
    tape = _tape_of(a, b)
    if tape is None:
        _check_finite(out, "add")
        return out
    an, bn = _lift(tape, a), _lift(tape, b)
    return tape.record(
        out,
        "add",
        lambda g: ((an.index, _unbroadcast(g, av.shape)), (bn.index, _unbroadcast(g, bv.shape))),
    )


def sub(a: Operand, b: Operand) -> Union[Node, Matrix]:
    av, bv = _value(a), _value(b)
    _elementwise_shape("sub", av, bv)
    out = av - bv
    tape = _tape_of(a, b)
    if tape is None:
        _check_finite(out, "sub")
        return out
    an, bn = _lift(tape, a), _lift(tape, b)
    return tape.record(
        out,
        "sub",
        lambda g: ((an.index, _unbroadcast(g, av.shape)), (bn.index, _unbroadcast(-g, bv.shape))),
    )


def mul(a: Operand, b: Operand) -> Union[Node, Matrix]:
    av, bv = _value(a), _value(b)
    _elementwise_shape("mul", av, bv)
    out = av * bv
    tape = _tape_of(a, b)
    if tape is None:
        _check_finite(out, "mul")
        return out
    an, bn = _lift(tape, a), _lift(tape, b)
    return tape.record(
        out,
        "mul",
        lambda g: (
            (an.index, _unbroadcast(g * bv, av.shape)),
            (bn.index, _unbroadcast(g * av, bv.shape)),
        ),
    )


def scale(a: Operand, factor: float) -> Union[Node, Matrix]:
    av = _value(a)
    out = av * float(factor)
    if not isinstance(a, Node):
        _check_finite(out, "scale")
        return out
    return a.tape.record(out, "scale", lambda g: ((a.index, g * float(factor)),))


def add_scalar(a: Operand, constant: float) -> Union[Node, Matrix]:
    av = _value(a)
    out = av + float(constant)
    if not isinstance(a, Node):
        _check_finite(out, "add_scalar")
        return out
    return a.tape.record(out, "add_scalar", lambda g: ((a.index, g),))


def square(a: Operand) -> Union[Node, Matrix]:
    av = _value(a)
    out = av * av
    if not isinstance(a, Node):
        _check_finite(out, "square")
        return out
    return a.tape.record(out, "square", lambda g: ((a.index, 2.0 * av * g),))


def exp(a: Operand) -> Union[Node, Matrix]:
    av = _value(a)
    with np.errstate(over="ignore"):
        out = np.exp(av)
    if not isinstance(a, Node):
        _check_finite(out, "exp")
        return out
    return a.tape.record(out, "exp", lambda g: ((a.index, out * g),))


def sum_all(a: Operand) -> Union[Node, Matrix]:
    av = _value(a)
    out = np.array([[av.sum()]])
    if not isinstance(a, Node):
        _check_finite(out, "sum")
        return out
    return a.tape.record(out, "sum", lambda g: ((a.index, np.full(av.shape, g[0, 0])),))


def mean_all(a: Operand) -> Union[Node, Matrix]:
    return scale(sum_all(a), 1.0 / _value(a).size)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _activate(x: np.ndarray, kind: str) -> Tuple[np.ndarray, np.ndarray]:
    """Return (activation(x), derivative at x)."""
    if kind == "tanh":
        out = np.tanh(x)
        return out, 1.0 - out * out
    if kind == "relu":
        return np.maximum(x, 0.0), (x > 0.0).astype(np.float64)
    if kind == "sigmoid":
        out = _sigmoid(x)
        return out, out * (1.0 - out)
    raise ContractError(f"unknown activation '{kind}', expected one of {ACTIVATIONS}")


def activation(x: Operand, kind: str = "tanh") -> Union[Node, Matrix]:
    xv = _value(x)
    out, slope = _activate(xv, kind)
    if not isinstance(x, Node):
        _check_finite(out, kind)
        return out
    return x.tape.record(out, kind, lambda g: ((x.index, g * slope),))


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def backward(tape: GradTape, loss: Node) -> Params:
    """Return d(loss)/d(p) for every parameter registered on ``tape``."""
    if not isinstance(loss, Node) or loss.tape is not tape:
        raise ContractError("loss must be a node recorded on this tape")
    if loss.value.shape != (1, 1):
        raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")

    grads: List[Optional[np.ndarray]] = [None] * len(tape._values)
    grads[loss.index] = np.ones((1, 1))
    for index in range(loss.index, -1, -1):
        grad = grads[index]
        vjp = tape._vjps[index]
        if grad is None or vjp is None:
            continue
        for input_index, contribution in vjp(grad):
            if grads[input_index] is None:
                grads[input_index] = contribution
            else:
                grads[input_index] = grads[input_index] + contribution

    result: Params = {}
    for name, index in tape._parameters.items():
        grad = grads[index]
        result[name] = np.zeros_like(tape._values[index]) if grad is None else grad
        _check_finite(result[name], f"gradient of {name}")
    return result


def finite_diff(
    f: Callable[[Mapping[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
) -> Params:
    """Central-difference gradient of scalar ``f`` at ``params``, coordinate by coordinate."""
    if not h > 0:
        raise ContractError(f"finite-difference step must be positive, got {h}")

    work = {name: np.array(value, dtype=np.float64, copy=True) for name, value in params.items()}

    def evaluate() -> float:
        value = float(f(work))
        if not np.isfinite(value):
            raise NumericError("objective evaluated to a non-finite value")
        return value

    grads: Params = {}
    for name, array in work.items():
        grad = np.zeros_like(array)
        flat, flat_grad = array.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            upper = evaluate()
            flat[i] = original - h
            lower = evaluate()
            flat[i] = original
            flat_grad[i] = (upper - lower) / (2.0 * h)
        grads[name] = grad
    return grads


def gradient_mismatch(analytic: np.ndarray, numeric: np.ndarray, abs_floor: float = 1e-7) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor); compare against a relative tolerance."""
    if analytic.shape != numeric.shape:
        raise ShapeError(f"gradient shape mismatch: {analytic.shape} vs {numeric.shape}")
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), abs_floor)
    within_floor = np.abs(analytic - numeric) <= abs_floor
    ratio = np.where(within_floor, 0.0, np.abs(analytic - numeric) / denom)
    return float(ratio.max())


# ---------------------------------------------------------------------------
# Optimiser and initialisation
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)

    @classmethod
    def for_parameters(cls, params: Mapping[str, np.ndarray], learning_rate: float = 1e-3, **kwargs: float) -> "AdamState":
        if not learning_rate > 0:
            raise ContractError(f"learning rate must be positive, got {learning_rate}")
        return cls(
            learning_rate=learning_rate,
            first_moment={name: np.zeros_like(value) for name, value in params.items()},
            second_moment={name: np.zeros_like(value) for name, value in params.items()},
            **kwargs,
        )


def adam_step(state: AdamState, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> Params:
    """Apply one bias-corrected Adam update; ``state`` advances, inputs are left untouched."""
    if set(params) != set(grads):
        raise ContractError(f"parameters {sorted(params)} and gradients {sorted(grads)} differ")
    for name, value in params.items():
        state.first_moment.setdefault(name, np.zeros_like(value))
        state.second_moment.setdefault(name, np.zeros_like(value))
        checks = (
            ("gradient", grads[name]),
            ("first moment", state.first_moment[name]),
            ("second moment", state.second_moment[name]),
        )
        for label, other in checks:
            if other.shape != value.shape:
                raise ShapeError(f"{label} for '{name}' has shape {other.shape}, parameter has {value.shape}")

    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step

    updated: Params = {}
    for name, value in params.items():
        grad = grads[name]
        m = state.beta1 * state.first_moment[name] + (1.0 - state.beta1) * grad
        v = state.beta2 * state.second_moment[name] + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        step = state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
        updated[name] = value - step
        _check_finite(updated[name], f"adam update of {name}")
    return updated


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> Matrix:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass(frozen=True)
class TrainReport:
    losses: Tuple[float, ...]
    epochs: int
    seed: int

    def __post_init__(self) -> None:
        if len(self.losses) != self.epochs:
            raise ContractError(f"loss curve has {len(self.losses)} entries for {self.epochs} epochs")

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


# ---------------------------------------------------------------------------
# JSON weight payloads
# ---------------------------------------------------------------------------


def matrices_to_payload(kind: str, activation_kind: str, weights: Mapping[str, np.ndarray], **extra: object) -> Dict[str, object]:
    return {
        "kind": kind,
        "activation": activation_kind,
        "shapes": {name: list(value.shape) for name, value in weights.items()},
        "weights": {name: value.tolist() for name, value in weights.items()},
        **extra,
    }


def matrices_from_payload(payload: Mapping[str, object], kind: str) -> Params:
    if payload.get("kind") != kind:
        raise ContractError(f"expected a '{kind}' model, got '{payload.get('kind')}'")
    shapes = payload.get("shapes")
    weights = payload.get("weights")
    if not isinstance(shapes, dict) or not isinstance(weights, dict) or set(shapes) != set(weights):
        raise ContractError("model payload needs matching 'shapes' and 'weights' objects")
    params: Params = {}
    for name, raw in weights.items():
        value = as_matrix(raw, name)
        if list(value.shape) != list(shapes[name]):
            raise ShapeError(f"weight '{name}' has shape {value.shape}, payload declares {shapes[name]}")
        params[name] = value
    return params
