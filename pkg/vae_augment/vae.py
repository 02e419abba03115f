"""Artificial feature generator: a two-layer VAE trained on standardized features.

Encoder:  h = act(x w1),  mu = h w2,  logvar = h w3
Latent:   z = mu + exp(logvar / 2) * eps
Decoder:  g = act(z w4),  x_tilde = g w5,  decoder logvar = g w6
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple, Union

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
        add_scalar,
        backward,
        exp,
        glorot_uniform,
        matmul,
        matrices_from_payload,
        matrices_to_payload,
        scale,
        square,
        sum_all,
    )
    from .preprocess import Dataset
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
        add_scalar,
        backward,
        exp,
        glorot_uniform,
        matmul,
        matrices_from_payload,
        matrices_to_payload,
        scale,
        square,
        sum_all,
    )
    from preprocess import Dataset
    from seeds import make_rng

logger = logging.getLogger(__name__)

WEIGHT_NAMES = ("w1", "w2", "w3", "w4", "w5", "w6")
ENCODER_WEIGHTS = ("w1", "w2", "w3")

Features = Union[np.ndarray, Dataset]


class VaeConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    latent_dim: Optional[int] = Field(default=None, ge=1)
    hidden: int = Field(default=64, ge=1)
    epochs: int = Field(default=2000, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    seed: int = 0
    activation: ActivationKind = "tanh"
    deterministic_latent: bool = False
    full_elbo: bool = False
    log_every: int = Field(default=500, ge=1)

    def resolved_latent_dim(self, feature_dim: int) -> int:
        if self.latent_dim is not None:
            return self.latent_dim
        return max(2, math.ceil(feature_dim / 4))


@dataclass(frozen=True)
class VaeParams:
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    w4: np.ndarray
    w5: np.ndarray
    w6: np.ndarray
    activation: ActivationKind = "tanh"

    def __post_init__(self) -> None:
        m, h = self.w1.shape
        latent = self.w2.shape[1]
        expected = {
            "w1": (m, h),
            "w2": (h, latent),
            "w3": (h, latent),
            "w4": (latent, h),
            "w5": (h, m),
            "w6": (h, m),
        }
        for name, shape in expected.items():
            value = getattr(self, name)
            if value.shape != shape:
                raise ShapeError(f"VAE weight {name} has shape {value.shape}, expected {shape}")
            if not np.all(np.isfinite(value)):
                raise NumericError(f"VAE weight {name} holds non-finite values")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.w2.shape[1]

    def weights(self) -> Params:
        return {name: getattr(self, name) for name in WEIGHT_NAMES}

    @classmethod
    def from_weights(cls, weights: Mapping[str, np.ndarray], activation_kind: ActivationKind = "tanh") -> "VaeParams":
        return cls(**{name: np.asarray(weights[name], dtype=np.float64) for name in WEIGHT_NAMES}, activation=activation_kind)

    def to_payload(self) -> Dict[str, object]:
        return matrices_to_payload("vae", self.activation, self.weights(), latent_dim=self.latent_dim, hidden=self.hidden)

    @classmethod
    def from_payload(cls, payload: Mapping[str, object]) -> "VaeParams":
        return cls.from_weights(matrices_from_payload(payload, "vae"), payload["activation"])  # type: ignore[arg-type]


def init_params(feature_dim: int, hidden: int, latent_dim: int, activation_kind: ActivationKind, rng: np.random.Generator) -> VaeParams:
    return VaeParams(
        w1=glorot_uniform(rng, feature_dim, hidden),
        w2=glorot_uniform(rng, hidden, latent_dim),
        w3=glorot_uniform(rng, hidden, latent_dim),
        w4=glorot_uniform(rng, latent_dim, hidden),
        w5=glorot_uniform(rng, hidden, feature_dim),
        w6=glorot_uniform(rng, hidden, feature_dim),
        activation=activation_kind,
    )


def _as_batch(features: Features) -> Tuple[np.ndarray, bool]:
    values = features.features if isinstance(features, Dataset) else np.asarray(features, dtype=np.float64)
    if values.ndim == 1:
        return values.reshape(1, -1), True
    return values, False


def _unbatch(value: np.ndarray, single: bool) -> np.ndarray:
    return value.reshape(-1) if single else value


def encode(x: Features, p: VaeParams) -> Tuple[np.ndarray, np.ndarray]:
    batch, single = _as_batch(x)
    if batch.shape[1] != p.input_dim:
        raise ShapeError(f"encoder expects {p.input_dim} features, got {batch.shape[1]}")
    hidden = activation(matmul(batch, p.w1), p.activation)
    return _unbatch(matmul(hidden, p.w2), single), _unbatch(matmul(hidden, p.w3), single)


def sample_latent(
    mu: np.ndarray,
    logvar: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    *,
    eps: Optional[np.ndarray] = None,
    deterministic: bool = False,
) -> np.ndarray:
    """Reparameterized draw z = mu + exp(logvar/2) * eps.

    ``deterministic`` reproduces the literal noise-free form z = mu + exp(logvar).
    """
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu shape {mu.shape} differs from logvar shape {logvar.shape}")
    if deterministic:
        return mu + np.exp(logvar)
    if eps is None:
        if rng is None:
            raise ContractError("sample_latent needs an rng or an explicit eps")
        eps = rng.standard_normal(mu.shape)
    return mu + np.exp(0.5 * logvar) * np.asarray(eps, dtype=np.float64)


def decode_heads(z: np.ndarray, p: VaeParams) -> Tuple[np.ndarray, np.ndarray]:
    """Decoder mean x_tilde and decoder log-variance head."""
    batch, single = _as_batch(z)
    if batch.shape[1] != p.latent_dim:
        raise ShapeError(f"decoder expects {p.latent_dim} latent dims, got {batch.shape[1]}")
    hidden = activation(matmul(batch, p.w4), p.activation)
    return _unbatch(matmul(hidden, p.w5), single), _unbatch(matmul(hidden, p.w6), single)


def decode(z: np.ndarray, p: VaeParams) -> np.ndarray:
    return decode_heads(z, p)[0]


def kl_divergence(mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    """Per-dimension KL(N(mu, exp(logvar)) || N(0, 1)) = 0.5 (var + mu^2 - 1 - logvar)."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return 0.5 * (np.exp(logvar) + mu * mu - 1.0 - logvar)


def _gaussian_penalty(mean: Node, logvar: Node) -> Node:
    # 0.5 * sum(exp(logvar) + mean^2 - 1 - logvar)
    inner = add_scalar(exp(logvar) + square(mean) - logvar, -1.0)
    return scale(sum_all(inner), 0.5)  # type: ignore[return-value]


def _loss_graph(
    tape: GradTape,
    batch: np.ndarray,
    weights: Mapping[str, Node],
    activation_kind: str,
    eps: Optional[np.ndarray],
    full_elbo: bool,
    deterministic_latent: bool,
) -> Node:
    x = tape.constant(batch)
    hidden = activation(x @ weights["w1"], activation_kind)
    mu = hidden @ weights["w2"]
    logvar = hidden @ weights["w3"]
    if deterministic_latent:
        z = mu + exp(logvar)
    else:
        z = mu + exp(scale(logvar, 0.5)) * tape.constant(eps)
    decoder_hidden = activation(z @ weights["w4"], activation_kind)
    x_tilde = decoder_hidden @ weights["w5"]

    total = sum_all(square(x - x_tilde)) + _gaussian_penalty(mu, logvar)
    if full_elbo:
        decoder_logvar = decoder_hidden @ weights["w6"]
        total = total + _gaussian_penalty(x_tilde, decoder_logvar)
    return scale(total, 1.0 / batch.shape[0])  # type: ignore[return-value]


def loss_and_gradients(
    batch: Features,
    weights: Mapping[str, np.ndarray],
    activation_kind: str,
    eps: Optional[np.ndarray],
    *,
    full_elbo: bool = False,
    deterministic_latent: bool = False,
) -> Tuple[float, Params]:
    values, _ = _as_batch(batch)
    tape = GradTape()
    nodes = {name: tape.parameter(name, weights[name]) for name in WEIGHT_NAMES}
    loss = _loss_graph(tape, values, nodes, activation_kind, eps, full_elbo, deterministic_latent)
    return float(loss.value[0, 0]), backward(tape, loss)


def elbo_loss(
    batch: Features,
    p: VaeParams,
    rng: Optional[np.random.Generator] = None,
    *,
    eps: Optional[np.ndarray] = None,
    full_elbo: bool = False,
    deterministic_latent: bool = False,
) -> float:
    """Batch-mean minimisation objective: squared reconstruction error plus the encoder KL term."""
    values, _ = _as_batch(batch)
    if values.shape[0] == 0:
        raise ContractError("elbo_loss needs a non-empty batch")
    if values.shape[1] != p.input_dim:
        raise ShapeError(f"VAE expects {p.input_dim} features, got {values.shape[1]}")
    if eps is None and not deterministic_latent:
        if rng is None:
            raise ContractError("elbo_loss needs an rng or an explicit eps")
        eps = rng.standard_normal((values.shape[0], p.latent_dim))
    tape = GradTape()
    nodes = {name: tape.constant(value) for name, value in p.weights().items()}
    loss = _loss_graph(tape, values, nodes, p.activation, eps, full_elbo, deterministic_latent)
    return float(loss.value[0, 0])


def fit(features: Features, cfg: VaeConfig) -> Tuple[VaeParams, TrainReport]:
    """Full-batch Adam on the ELBO objective; deterministic given ``cfg.seed``."""
    batch, _ = _as_batch(features)
    if batch.shape[0] == 0:
        raise ContractError("cannot train a VAE on an empty feature matrix")
    n, feature_dim = batch.shape
    latent_dim = cfg.resolved_latent_dim(feature_dim)

    params = init_params(feature_dim, cfg.hidden, latent_dim, cfg.activation, make_rng(cfg.seed, "vae-init"))
    eps_rng = make_rng(cfg.seed, "vae-eps")
    weights = params.weights()
    state = AdamState.for_parameters(weights, cfg.learning_rate)

    losses = []
    for epoch in range(cfg.epochs):
        eps = None if cfg.deterministic_latent else eps_rng.standard_normal((n, latent_dim))
        loss, grads = loss_and_gradients(
            batch,
            weights,
            cfg.activation,
            eps,
            full_elbo=cfg.full_elbo,
            deterministic_latent=cfg.deterministic_latent,
        )
        losses.append(loss)
        weights = adam_step(state, weights, grads)
        if (epoch + 1) % cfg.log_every == 0:
            logger.debug("VAE epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, loss)

    logger.info("VAE trained on %d rows: loss %.4f -> %.4f", n, losses[0], losses[-1])
    return VaeParams.from_weights(weights, cfg.activation), TrainReport(tuple(losses), cfg.epochs, cfg.seed)


def train(features: Features, cfg: VaeConfig) -> VaeParams:
    return fit(features, cfg)[0]


def generate(p: VaeParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Decode ``count`` prior draws z ~ N(0, I) into artificial feature rows."""
    if count < 1:
        raise ContractError(f"generate needs count >= 1, got {count}")
    z = rng.standard_normal((count, p.latent_dim))
    return decode(z, p)
