from __future__ import annotations

import math

import numpy as np
import pytest

from vae_augment.numeric_core import ContractError, ShapeError
from vae_augment.preprocess import Codec, Dataset, NumericStats
from vae_augment.regressor import (
    DnnConfig,
    DnnParams,
    dnn_forward,
    dnn_train,
    init_params,
    mse_loss,
    pool_row_weights,
    predict,
)


def _dataset(features, labels, origin=None) -> Dataset:  # type: ignore[no-untyped-def]
    features = np.asarray(features, dtype=np.float64)
    codec = Codec(tuple(NumericStats(f"x{i}", 0.0, 1.0) for i in range(features.shape[1])), "y", 0.0, 1.0)
    return Dataset(features, labels, codec, origin)


def _zero_params(m: int = 3, h1: int = 4, h2: int = 5, bias: float = 0.75) -> DnnParams:
    return DnnParams(
        w1=np.zeros((m, h1)),
        b1=np.zeros((1, h1)),
        w2=np.zeros((h1, h2)),
        b2=np.zeros((1, h2)),
        w3=np.zeros((h2, 1)),
        b3=np.full((1, 1), bias),
    )


def test_zero_weights_predict_the_output_bias():
    assert dnn_forward(np.array([1.0, -2.0, 3.0]), _zero_params()) == 0.75


def test_one_dimensional_hand_computation():
    params = DnnParams(
        w1=np.array([[2.0]]),
        b1=np.array([[0.5]]),
        w2=np.array([[-1.0]]),
        b2=np.array([[0.25]]),
        w3=np.array([[3.0]]),
        b3=np.array([[-0.5]]),
    )
    h1 = math.tanh(2.0 * 0.4 + 0.5)
    h2 = math.tanh(-h1 + 0.25)
    assert dnn_forward(np.array([0.4]), params) == pytest.approx(3.0 * h2 - 0.5, abs=1e-12)

    activated = DnnParams(**{**params.weights(), "activation": "tanh", "activated_head": True})
    assert dnn_forward(np.array([0.4]), activated) == pytest.approx(math.tanh(3.0 * h2 - 0.5), abs=1e-12)


def test_predict_matches_forward_row_by_row():
    rng = np.random.default_rng(0)
    params = init_params(3, DnnConfig(hidden1=6, hidden2=5), rng)
    test = _dataset(rng.standard_normal((4, 3)), np.zeros(4))
    predictions = predict(test, params)
    assert predictions.shape == (4,)
    for row, value in zip(test.features, predictions):
        assert value == pytest.approx(dnn_forward(row, params), abs=1e-12)
    assert np.all(np.isfinite(predictions))


def test_predict_on_empty_set_and_wrong_width():
    params = _zero_params()
    assert predict(_dataset(np.zeros((0, 3)), []), params).shape == (0,)
    with pytest.raises(ShapeError):
        predict(_dataset(np.zeros((2, 4)), [0.0, 1.0]), params)


def test_training_reduces_loss_and_is_deterministic():
    rng = np.random.default_rng(1)
    features = rng.standard_normal((40, 3))
    pool = _dataset(features, features @ np.array([0.5, -1.0, 0.25]))
    cfg = DnnConfig(hidden1=8, hidden2=8, epochs=200, learning_rate=1e-2, seed=3)
    params, report = dnn_train(pool, cfg)
    again, _ = dnn_train(pool, cfg)
    assert report.final_loss < report.initial_loss
    assert len(report.losses) == 200 and report.seed == 3
    for name, value in params.weights().items():
        assert np.array_equal(value, again.weights()[name])
    assert mse_loss(pool, params) < report.initial_loss


def test_constant_label_pool_converges_to_the_constant():
    rng = np.random.default_rng(2)
    pool = _dataset(rng.standard_normal((20, 2)), np.full(20, 0.8))
    params, _ = dnn_train(pool, DnnConfig(hidden1=4, hidden2=4, epochs=2000, learning_rate=1e-2))
    assert np.all(np.abs(predict(pool, params) - 0.8) < 1e-2)


def test_narrow_hidden_layers_warn(caplog):
    pool = _dataset(np.ones((3, 1)), [0.0, 1.0, 2.0])
    with caplog.at_level("WARNING"):
        dnn_train(pool, DnnConfig(hidden1=10, hidden2=64, epochs=1))
    assert "hidden1" in caplog.text and "hidden2" not in caplog.text


def test_empty_pool_is_rejected():
    with pytest.raises(ContractError):
        dnn_train(_dataset(np.zeros((0, 2)), []), DnnConfig(epochs=1))


def test_default_architecture():
    cfg = DnnConfig()
    assert cfg.hidden1 > 50 and cfg.hidden2 > 50
    assert (cfg.epochs, cfg.learning_rate, cfg.activation) == (3000, 1e-3, "tanh")


def test_model_payload_round_trip():
    params = init_params(2, DnnConfig(hidden1=3, hidden2=2, activated_head=True), np.random.default_rng(4))
    restored = DnnParams.from_payload(params.to_payload())
    assert restored.activated_head
    assert np.array_equal(restored.w2, params.w2)


def test_row_weights_give_artificial_rows_a_fixed_share():
    origin = np.array(["real"] * 4 + ["noise"] * 40, dtype=object)
    weights = pool_row_weights(origin, 0.25)
    assert weights.sum() == pytest.approx(1.0)
    assert weights[:4].sum() == pytest.approx(0.8)
    assert weights[4:].sum() == pytest.approx(0.2)
    assert np.all(weights[:4] == weights[0]) and np.all(weights[4:] == weights[4])


def test_row_weights_fall_back_to_the_plain_mean():
    mixed = np.array(["real", "vae", "vae"], dtype=object)
    assert np.allclose(pool_row_weights(mixed, None), 1.0 / 3.0)
    assert np.allclose(pool_row_weights(np.array(["real"] * 5, dtype=object), 0.05), 0.2)
    assert np.allclose(pool_row_weights(np.array(["noise"] * 2, dtype=object), 0.05), 0.5)
    with pytest.raises(ContractError):
        pool_row_weights(np.array([], dtype=object), 0.05)


def test_mse_loss_applies_the_pool_weights():
    pool = _dataset(np.zeros((3, 3)), [1.75, 0.75, 0.75], ["real", "noise", "noise"])
    params = _zero_params()
    assert mse_loss(pool, params) == pytest.approx(1.0 / 3.0)
    assert mse_loss(pool, params, artificial_weight=1.0) == pytest.approx(0.5)


@pytest.mark.parametrize(("artificial_weight", "expected"), [(0.05, 0.8 / 1.05), (None, 0.8 * 20 / 220)])
def test_gaussian_label_rows_pull_predictions_by_their_loss_share(artificial_weight, expected):
    # identical inputs force one shared prediction: the weighted mean of all labels
    origin = ["real"] * 20 + ["noise"] * 200
    labels = np.concatenate([np.full(20, 0.8), np.zeros(200)])
    pool = _dataset(np.zeros((220, 2)), labels, origin)
    cfg = DnnConfig(hidden1=4, hidden2=4, epochs=2000, learning_rate=1e-2, artificial_weight=artificial_weight)
    params, _ = dnn_train(pool, cfg)
    assert np.all(np.abs(predict(pool, params) - expected) < 1e-2)
