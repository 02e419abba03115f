"""Verification DNN: input -> two activated hidden layers -> one output neuron."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

try:
    # When imported as part of the package
    from .numeric_core import (
        ActivationKind,
        AdamState,
        ContractError,
        GradTape,
        Node,
        NumericError,
        Params,
        ShapeError,
        TrainReport,
        activation,
        adam_step,
        backward,
        glorot_uniform,
        matmul,
        matrices_from_payload,
        matrices_to_payload,
        mean_all,
        mul,
        square,
        sum_all,
    )
    from .preprocess import ORIGIN_REAL, Dataset
    from .seeds import make_rng
except ImportError:
    # When running as standalone scripts
    from numeric_core import (
        ActivationKind,
        AdamState,
        ContractError,
        GradTape,
        Node,
        NumericError,
        Params,
        ShapeError,
        TrainReport,
        activation,
        adam_step,
        backward,
        glorot_uniform,
        matmul,
        matrices_from_payload,
        matrices_to_payload,
        mean_all,
        mul,
        square,
        sum_all,
    )
    from preprocess import ORIGIN_REAL, Dataset
    from seeds import make_rng

logger = logging.getLogger(__name__)

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")
MIN_HIDDEN_UNITS = 51

__all__ = [
    "DnnConfig",
    "DnnParams",
    "TrainReport",
    "dnn_forward",
    "dnn_train",
    "init_params",
    "mse_loss",
    "pool_row_weights",
    "predict",
]


class DnnConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden1: int = Field(default=64, ge=1)
    hidden2: int = Field(default=64, ge=1)
    epochs: int = Field(default=3000, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    seed: int = 0
    activation: ActivationKind = "tanh"
    activated_head: bool = False
    # total loss share of artificial rows relative to the real rows; None weighs every row equally
    artificial_weight: Optional[float] = Field(default=0.05, gt=0)
    log_every: int = Field(default=500, ge=1)

    def warn_if_narrow(self) -> None:
        for name, width in (("hidden1", self.hidden1), ("hidden2", self.hidden2)):
            if width < MIN_HIDDEN_UNITS:
                logger.warning("DNN %s has %d units, fewer than the %d the architecture calls for", name, width, MIN_HIDDEN_UNITS)


@dataclass(frozen=True)
class DnnParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    activation: ActivationKind = "tanh"
    activated_head: bool = False

    def __post_init__(self) -> None:
        m, h1 = self.w1.shape
        h2 = self.w2.shape[1]
        expected = {"w1": (m, h1), "b1": (1, h1), "w2": (h1, h2), "b2": (1, h2), "w3": (h2, 1), "b3": (1, 1)}
        for name, shape in expected.items():
            value = getattr(self, name)
            if value.shape != shape:
                raise ShapeError(f"DNN parameter {name} has shape {value.shape}, expected {shape}")
            if not np.all(np.isfinite(value)):
                raise NumericError(f"DNN parameter {name} holds non-finite values")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    def weights(self) -> Params:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def from_weights(
        cls,
        weights: Mapping[str, np.ndarray],
        activation_kind: ActivationKind = "tanh",
        activated_head: bool = False,
    ) -> "DnnParams":
        values = {name: np.asarray(weights[name], dtype=np.float64) for name in PARAM_NAMES}
        return cls(**values, activation=activation_kind, activated_head=activated_head)

    def to_payload(self) -> Dict[str, object]:
        return matrices_to_payload("dnn", self.activation, self.weights(), activated_head=self.activated_head)

    @classmethod
    def from_payload(cls, payload: Mapping[str, object]) -> "DnnParams":
        return cls.from_weights(
            matrices_from_payload(payload, "dnn"),
            payload["activation"],  # type: ignore[arg-type]
            bool(payload.get("activated_head", False)),
        )


def init_params(feature_dim: int, cfg: DnnConfig, rng: np.random.Generator) -> DnnParams:
    return DnnParams(
        w1=glorot_uniform(rng, feature_dim, cfg.hidden1),
        b1=np.zeros((1, cfg.hidden1)),
        w2=glorot_uniform(rng, cfg.hidden1, cfg.hidden2),
        b2=np.zeros((1, cfg.hidden2)),
        w3=glorot_uniform(rng, cfg.hidden2, 1),
        b3=np.zeros((1, 1)),
        activation=cfg.activation,
        activated_head=cfg.activated_head,
    )


def _forward(x, weights: Mapping[str, object], activation_kind: str, activated_head: bool):  # type: ignore[no-untyped-def]
    # works on plain arrays and on tape nodes alike
    h1 = activation(matmul(x, weights["w1"]) + weights["b1"], activation_kind)
    h2 = activation(matmul(h1, weights["w2"]) + weights["b2"], activation_kind)
    out = matmul(h2, weights["w3"]) + weights["b3"]
    return activation(out, activation_kind) if activated_head else out


def _batch_forward(features: np.ndarray, p: DnnParams) -> np.ndarray:
    if features.shape[1] != p.input_dim:
        raise ShapeError(f"DNN expects {p.input_dim} features, got {features.shape[1]}")
    return np.asarray(_forward(features, p.weights(), p.activation, p.activated_head)).reshape(-1)


def dnn_forward(x: np.ndarray, p: DnnParams) -> float:
    row = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(_batch_forward(row, p)[0])


def predict(test: Dataset, p: DnnParams) -> np.ndarray:
    if len(test) == 0:
        return np.zeros(0)
    return _batch_forward(test.features, p)


def pool_row_weights(origin: np.ndarray, artificial_weight: Optional[float]) -> np.ndarray:
    """Per-row loss weights summing to one.

    Real rows share ``1 / (1 + a)`` of the loss and artificial rows share ``a / (1 + a)``,
    whatever the augmentation scale. A pool without both kinds of rows, or ``a=None``,
    falls back to the plain mean.
    """
    origin = np.asarray(origin, dtype=object).reshape(-1)
    n = len(origin)
    if n == 0:
        raise ContractError("row weights need at least one row")
    real = origin == ORIGIN_REAL
    n_real = int(np.count_nonzero(real))
    n_artificial = n - n_real
    if artificial_weight is None or n_real == 0 or n_artificial == 0:
        return np.full(n, 1.0 / n)
    total = 1.0 + artificial_weight
    return np.where(real, 1.0 / (n_real * total), artificial_weight / (n_artificial * total))


def _mse_graph(
    tape: GradTape,
    features: np.ndarray,
    labels: np.ndarray,
    nodes: Mapping[str, Node],
    p_activation: str,
    activated_head: bool,
    row_weights: Optional[np.ndarray],
) -> Node:
    prediction = _forward(tape.constant(features), nodes, p_activation, activated_head)
    squared = square(prediction - tape.constant(labels.reshape(-1, 1)))
    if row_weights is None:
        return mean_all(squared)  # type: ignore[return-value]
    return sum_all(mul(squared, tape.constant(row_weights.reshape(-1, 1))))  # type: ignore[return-value]


def mse_loss_and_gradients(
    features: np.ndarray,
    labels: np.ndarray,
    weights: Mapping[str, np.ndarray],
    activation_kind: str,
    activated_head: bool = False,
    row_weights: Optional[np.ndarray] = None,
) -> Tuple[float, Params]:
    if row_weights is not None and len(row_weights) != len(labels):
        raise ShapeError(f"{len(row_weights)} row weights for {len(labels)} rows")
    tape = GradTape()
    nodes = {name: tape.parameter(name, weights[name]) for name in PARAM_NAMES}
    loss = _mse_graph(tape, features, labels, nodes, activation_kind, activated_head, row_weights)
    return float(loss.value[0, 0]), backward(tape, loss)


def mse_loss(pool: Dataset, p: DnnParams, artificial_weight: Optional[float] = None) -> float:
    if len(pool) == 0:
        raise ContractError("mse_loss needs a non-empty dataset")
    residual = predict(pool, p) - pool.labels
    return float(np.sum(pool_row_weights(pool.origin, artificial_weight) * residual * residual))


def dnn_train(pool: Dataset, cfg: DnnConfig) -> Tuple[DnnParams, TrainReport]:
    """Full-batch Adam on the pool-weighted squared error; deterministic given ``cfg.seed``."""
    if len(pool) == 0:
        raise ContractError("cannot train the regressor on an empty pool")
    cfg.warn_if_narrow()

    params = init_params(pool.feature_dim, cfg, make_rng(cfg.seed, "dnn-init"))
    weights = params.weights()
    state = AdamState.for_parameters(weights, cfg.learning_rate)
    row_weights = pool_row_weights(pool.origin, cfg.artificial_weight)

    losses = []
    for epoch in range(cfg.epochs):
        loss, grads = mse_loss_and_gradients(
            pool.features, pool.labels, weights, cfg.activation, cfg.activated_head, row_weights
        )
        losses.append(loss)
        weights = adam_step(state, weights, grads)
        if (epoch + 1) % cfg.log_every == 0:
            logger.debug("DNN epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, loss)

    trained = DnnParams.from_weights(weights, cfg.activation, cfg.activated_head)
    return trained, TrainReport(tuple(losses), cfg.epochs, cfg.seed)
