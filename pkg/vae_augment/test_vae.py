from __future__ import annotations

import math

import numpy as np
import pytest

from vae_augment.load_data import parse_schema, table_from_frame
from vae_augment.numeric_core import ContractError, ShapeError
from vae_augment.preprocess import clean, prepare
from vae_augment.synth import SyntheticSpec, generate_table
from vae_augment.vae import (
    VaeConfig,
    VaeParams,
    decode,
    elbo_loss,
    encode,
    fit,
    generate,
    init_params,
    kl_divergence,
    sample_latent,
    train,
)


def _zero_params(m: int = 3, h: int = 4, latent: int = 2) -> VaeParams:
    return VaeParams(
        w1=np.zeros((m, h)),
        w2=np.zeros((h, latent)),
        w3=np.zeros((h, latent)),
        w4=np.zeros((latent, h)),
        w5=np.zeros((h, m)),
        w6=np.zeros((h, m)),
    )


def _hand_params() -> VaeParams:
    # M=2, h=2, L=1
    return VaeParams(
        w1=np.array([[0.5, -1.0], [1.0, 0.25]]),
        w2=np.array([[1.0], [2.0]]),
        w3=np.array([[-1.0], [0.5]]),
        w4=np.array([[0.3, -0.7]]),
        w5=np.array([[1.0, 0.0], [2.0, -1.0]]),
        w6=np.zeros((2, 2)),
    )


def test_zero_network_encodes_to_standard_normal():
    mu, logvar = encode(np.array([1.0, -2.0, 0.5]), _zero_params())
    assert mu.tolist() == [0.0, 0.0] and logvar.tolist() == [0.0, 0.0]
    assert decode(np.array([0.3, -0.1]), _zero_params()).tolist() == [0.0, 0.0, 0.0]


def test_encode_matches_hand_arithmetic():
    x = np.array([1.0, 2.0])
    h1, h2 = math.tanh(1.0 * 0.5 + 2.0 * 1.0), math.tanh(1.0 * -1.0 + 2.0 * 0.25)
    mu, logvar = encode(x, _hand_params())
    assert mu[0] == pytest.approx(h1 * 1.0 + h2 * 2.0, abs=1e-12)
    assert logvar[0] == pytest.approx(-h1 + 0.5 * h2, abs=1e-12)
    again = encode(x, _hand_params())
    assert np.array_equal(mu, again[0]) and np.array_equal(logvar, again[1])


def test_decode_matches_hand_arithmetic():
    g1, g2 = math.tanh(0.3 * 2.0), math.tanh(-0.7 * 2.0)
    out = decode(np.array([2.0]), _hand_params())
    assert out == pytest.approx([g1 + 2.0 * g2, -g2], abs=1e-12)


def test_encode_rejects_wrong_width():
    with pytest.raises(ShapeError):
        encode(np.ones(4), _zero_params())


def test_sample_latent_limits():
    eps = np.array([0.7, -1.2])
    assert np.array_equal(sample_latent(np.zeros(2), np.zeros(2), eps=eps), eps)
    mu = np.array([1.5, -0.5])
    assert sample_latent(mu, np.full(2, -200.0), eps=eps) == pytest.approx(mu, abs=1e-30)
    assert sample_latent(mu, np.zeros(2), deterministic=True) == pytest.approx(mu + 1.0)
    with pytest.raises(ContractError):
        sample_latent(mu, np.zeros(2))


def test_kl_reference_values():
    assert kl_divergence(np.zeros(3), np.zeros(3)).tolist() == [0.0, 0.0, 0.0]
    assert kl_divergence(np.array([0.0]), np.array([1.0]))[0] == pytest.approx(0.5 * (math.e - 2.0))
    assert 0.5 * (math.e - 2.0) == pytest.approx(0.3591, abs=1e-4)


def test_kl_is_non_negative_on_random_draws():
    rng = np.random.default_rng(11)
    mu, logvar = rng.uniform(-5, 5, 1000), rng.uniform(-5, 5, 1000)
    assert np.all(kl_divergence(mu, logvar) >= 0.0)


def test_perfect_autoencoder_has_zero_loss():
    # mu = 0, logvar = 0 and the decoder ignores z, reproducing x = 0 exactly
    batch = np.zeros((4, 3))
    assert elbo_loss(batch, _zero_params(), eps=np.zeros((4, 2))) == 0.0


def test_elbo_is_batch_mean_of_reconstruction_error():
    # zero network: KL vanishes and each row contributes |x|^2
    params = _zero_params(m=2, h=2, latent=1)
    loss = elbo_loss(np.ones((3, 2)), params, eps=np.zeros((3, 1)))
    assert loss == pytest.approx(2.0)


def test_elbo_rejects_empty_batch_and_needs_noise():
    with pytest.raises(ContractError):
        elbo_loss(np.zeros((0, 3)), _zero_params(), eps=np.zeros((0, 2)))
    with pytest.raises(ContractError):
        elbo_loss(np.zeros((2, 3)), _zero_params())


def test_training_is_deterministic_and_reduces_loss():
    features = np.random.default_rng(2).standard_normal((25, 4))
    cfg = VaeConfig(hidden=8, epochs=150, learning_rate=1e-2, seed=5)
    params, report = fit(features, cfg)
    again = train(features, cfg)
    for name, value in params.weights().items():
        assert np.array_equal(value, again.weights()[name])
    assert len(report.losses) == 150
    assert report.final_loss < report.initial_loss
    assert params.latent_dim == 2


def test_latent_dim_default_and_override():
    assert VaeConfig().resolved_latent_dim(3) == 2
    assert VaeConfig().resolved_latent_dim(13) == 4
    assert VaeConfig(latent_dim=3).resolved_latent_dim(13) == 3


def test_generate_shapes_and_zero_decoder():
    rng = np.random.default_rng(0)
    params = init_params(5, 6, 2, "tanh", rng)
    assert generate(params, 7, rng).shape == (7, 5)
    assert np.array_equal(generate(_zero_params(), 4, rng), np.zeros((4, 3)))
    with pytest.raises(ContractError):
        generate(params, 0, rng)


def test_model_payload_round_trip():
    params = init_params(3, 4, 2, "sigmoid", np.random.default_rng(1))
    restored = VaeParams.from_payload(params.to_payload())
    assert restored.activation == "sigmoid"
    for name, value in params.weights().items():
        assert np.array_equal(restored.weights()[name], value)


def test_sample_latent_mean_converges_to_mu():
    rng = np.random.default_rng(8)
    draws = 100_000
    mu, logvar = np.array([0.5, -1.25]), np.array([0.0, -0.7])
    z = sample_latent(np.tile(mu, (draws, 1)), np.tile(logvar, (draws, 1)), rng)
    std = np.exp(0.5 * logvar)
    assert np.all(np.abs(z.mean(axis=0) - mu) <= 3.0 * std / math.sqrt(draws))
    assert np.allclose(z.std(axis=0), std, rtol=0.02)


def _canonical_train_features() -> np.ndarray:
    spec = SyntheticSpec(rows=120, numeric=4, label="linear", noise=0.1)
    table = table_from_frame(generate_table(spec), parse_schema(spec.schema_payload()))
    train_set, _ = prepare(clean(table), seed=0)
    return train_set.features


def test_training_loss_falls_from_first_to_last_epochs():
    _, report = fit(_canonical_train_features(), VaeConfig(hidden=16, epochs=300, learning_rate=5e-3, seed=1))
    tenth = len(report.losses) // 10
    assert np.median(report.losses[-tenth:]) < np.median(report.losses[:tenth])


def test_generated_feature_means_stay_near_the_training_hull():
    features = _canonical_train_features()
    params = train(features, VaeConfig(hidden=16, epochs=300, learning_rate=5e-3, seed=2))
    means = generate(params, 5000, np.random.default_rng(3)).mean(axis=0)
    low, high = features.min(axis=0), features.max(axis=0)
    margin = 0.5 * (high - low)
    assert np.all(means >= low - margin) and np.all(means <= high + margin)


def test_generate_ignores_the_encoder_weights():
    params = train(np.random.default_rng(4).standard_normal((20, 3)), VaeConfig(hidden=6, epochs=30, seed=4))
    rng = np.random.default_rng(5)
    scrambled = VaeParams(
        **{**params.weights(), **{name: rng.standard_normal(params.weights()[name].shape) for name in ("w1", "w2", "w3")}},
        activation=params.activation,
    )
    first = generate(params, 50, np.random.default_rng(6))
    second = generate(scrambled, 50, np.random.default_rng(6))
    assert np.array_equal(first, second)
