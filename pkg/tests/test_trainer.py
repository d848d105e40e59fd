import math

import numpy as np
import pytest

from sidm.layers import CnnBiGruAttention
from sidm.numcore import CHECK_DTYPE, RngState, finite_diff_grad
from sidm.trainer import (
    AdamState,
    EarlyStopping,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    bce_loss,
    evaluate,
    hyper_search,
    train,
)
from tests.conftest import TOY_CONFIG, make_separable


class TestBceLoss:
    def test_half_probability(self):
        loss, _ = bce_loss(0.5, 1)
        assert loss == pytest.approx(math.log(2), abs=1e-9)

    def test_perfect_prediction(self):
        loss, _ = bce_loss(1.0, 1)
        assert loss <= 1e-6

    def test_gradient_vs_finite_diff(self):
        p = np.array(0.3, dtype=CHECK_DTYPE)
        _, grad = bce_loss(float(p), 1)
        fd = finite_diff_grad(lambda v: bce_loss(float(v), 1)[0], p)
        assert abs(grad - float(fd)) < 1e-6

    def test_clamp_keeps_loss_finite(self):
        loss, grad = bce_loss(0.0, 1)
        assert np.isfinite(loss) and np.isfinite(grad)


class TestAdam:
    def test_first_step_magnitude(self):
        params = {"w": np.ones(4)}
        state = AdamState.for_params(params, lr=0.001)
        adam_step(params, {"w": np.ones(4)}, state)
        # bias correction makes m_hat = v_hat = 1 on the first step
        np.testing.assert_allclose(params["w"], 1.0 - 0.001 / (1.0 + 1e-8), atol=1e-12)

    def test_zero_gradient_is_identity(self):
        params = {"w": np.full(3, 0.731)}
        before = params["w"].copy()
        state = AdamState.for_params(params)
        adam_step(params, {"w": np.zeros(3)}, state)
        assert state.t == 1
        np.testing.assert_array_equal(params["w"], before)  # bitwise

    def test_descends_quadratic(self):
        theta = {"x": np.array([1.0])}
        state = AdamState.for_params(theta, lr=0.001)
        values = [float(theta["x"][0] ** 2)]
        for _ in range(10):
            adam_step(theta, {"x": 2.0 * theta["x"]}, state)
            values.append(float(theta["x"][0] ** 2))
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_shape_mismatch(self):
        params = {"w": np.zeros(3)}
        state = AdamState.for_params(params)
        with pytest.raises(ValueError):
            adam_step(params, {"w": np.zeros(4)}, state)

    def test_name_mismatch(self):
        params = {"w": np.zeros(3)}
        state = AdamState.for_params(params)
        with pytest.raises(ValueError):
            adam_step(params, {"v": np.zeros(3)}, state)


class TestEarlyStopping:
    def test_crafted_sequence_stops_after_epoch_six(self):
        stopper = EarlyStopping(patience=4)
        losses = [3.0, 2.0, 2.1, 2.2, 2.3, 2.4]
        stopped_at = None
        for epoch, loss in enumerate(losses, start=1):
            if stopper.update(epoch, loss):
                stopped_at = epoch
                break
        assert stopped_at == 6
        assert stopper.best_epoch == 2
        assert stopper.best_loss == 2.0

    def test_no_stop_while_improving(self):
        stopper = EarlyStopping(patience=2)
        assert not any(
            stopper.update(e, loss) for e, loss in enumerate([3.0, 2.5, 2.0, 1.5], 1)
        )


class TestTrainConfig:
    def test_patience_must_be_less_than_epochs(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=4, patience=4)

    def test_positive_fields(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)


class TestTrainLoop:
    def test_overfits_separable_corpus(self, toy_model, trained_toy, separable_data):
        best, history = trained_toy
        x, y = separable_data
        _, acc = evaluate(toy_model, best, x, y)
        assert acc == 1.0

    def test_loss_decreases_over_first_epochs(self, trained_toy):
        _, history = trained_toy
        first = history.train_loss[:5]
        # monotone within 5% single-epoch noise
        assert all(b <= a * 1.05 for a, b in zip(first, first[1:]))
        assert first[-1] < first[0]

    def test_best_epoch_is_argmin(self, trained_toy):
        _, history = trained_toy
        assert history.val_loss[history.best_epoch - 1] == min(history.val_loss)

    def test_restored_weights_reproduce_best_loss(self, toy_model, trained_toy, separable_data):
        best, history = trained_toy
        x, y = separable_data
        loss, _ = evaluate(toy_model, best, x, y)
        assert loss == pytest.approx(min(history.val_loss), abs=1e-6)

    def test_bitwise_deterministic(self, toy_model, separable_data):
        x, y = separable_data
        config = TrainConfig(epochs=3, batch_size=8, patience=2, seed=11)

        def run():
            params = toy_model.init_params(RngState(11).substream("init"))
            best, _ = train(toy_model, params, (x, y), (x, y), config)
            return best

        a, b = run(), run()
        for (name, va), (_, vb) in zip(a.to_dict().items(), b.to_dict().items()):
            assert np.array_equal(va, vb), name

    def test_bitwise_deterministic_with_dropout(self, separable_data):
        from dataclasses import replace

        from tests.conftest import TOY_CONFIG

        x, y = separable_data
        model = CnnBiGruAttention(replace(TOY_CONFIG, dropout=0.5))
        config = TrainConfig(epochs=3, batch_size=8, patience=2, seed=13)

        def run():
            params = model.init_params(RngState(13).substream("init"))
            best, _ = train(model, params, (x, y), (x, y), config)
            return best

        a, b = run(), run()
        for (name, va), (_, vb) in zip(a.to_dict().items(), b.to_dict().items()):
            assert np.array_equal(va, vb), name

    def test_grad_clip_scales_global_norm(self):
        from sidm.trainer import clip_grads

        grads = {"a": np.array([3.0, 0.0]), "b": np.array([0.0, 4.0])}
        clip_grads(grads, max_norm=1.0)  # global norm was 5
        total = np.sqrt(sum(np.sum(g * g) for g in grads.values()))
        assert total == pytest.approx(1.0)
        np.testing.assert_allclose(grads["a"], [0.6, 0.0])

    def test_grad_clip_leaves_small_gradients_alone(self):
        from sidm.trainer import clip_grads

        grads = {"a": np.array([0.1, 0.2])}
        before = grads["a"].copy()
        clip_grads(grads, max_norm=10.0)
        np.testing.assert_array_equal(grads["a"], before)

    def test_early_stop_on_plateau(self, toy_model):
        # constant inputs give a validation loss that stops improving quickly
        x = np.tile(np.array([2, 3, 4, 5, 0, 0, 0, 0, 0, 0], dtype=np.int32), (12, 1))
        y = np.array([0, 1] * 6, dtype=np.int8)
        params = toy_model.init_params(RngState(3).substream("init"))
        config = TrainConfig(epochs=60, batch_size=12, patience=3, seed=3)
        _, history = train(toy_model, params, (x, y), (x, y), config)
        assert history.stop_reason.startswith("early stop")
        assert len(history.val_loss) < 60

    def test_empty_split_rejected(self, toy_model, separable_data):
        x, y = separable_data
        params = toy_model.init_params(RngState(0).substream("init"))
        with pytest.raises(ValueError):
            train(toy_model, params, (x[:0], y[:0]), (x, y), TrainConfig(epochs=2, patience=1))

    def test_divergence_detected(self, toy_model, separable_data):
        x, y = separable_data
        params = toy_model.init_params(RngState(0).substream("init"))
        params.out_b += np.nan
        config = TrainConfig(epochs=2, batch_size=8, patience=1, seed=0)
        with pytest.raises(TrainingDiverged):
            train(toy_model, params, (x, y), (x, y), config)


class TestHyperSearch:
    def _data(self):
        x, y = make_separable(n_per_class=8, seed=4)
        return (x, y), (x, y)

    def test_single_point_grid(self):
        train_data, val_data = self._data()
        result = hyper_search(
            TOY_CONFIG,
            train_data,
            val_data,
            TrainConfig(epochs=4, batch_size=8, patience=2, seed=5),
            gru_units_grid=(4,),
            dropout_grid=(0.0,),
            budget_epochs=3,
        )
        assert result.best.gru_units == 4
        assert result.best.dropout == 0.0
        assert len(result.trials) == 1

    def test_every_config_evaluated_once(self):
        train_data, val_data = self._data()
        result = hyper_search(
            TOY_CONFIG,
            train_data,
            val_data,
            TrainConfig(epochs=4, batch_size=8, patience=2, seed=5),
            gru_units_grid=(3, 4),
            dropout_grid=(0.0, 0.3),
            budget_epochs=2,
        )
        assert len(result.trials) == 4
        combos = {(t.gru_units, t.dropout) for t in result.trials}
        assert combos == {(3, 0.0), (3, 0.3), (4, 0.0), (4, 0.3)}

    def test_winner_minimizes_logged_loss(self):
        train_data, val_data = self._data()
        result = hyper_search(
            TOY_CONFIG,
            train_data,
            val_data,
            TrainConfig(epochs=4, batch_size=8, patience=2, seed=5),
            gru_units_grid=(3, 4),
            dropout_grid=(0.0,),
            budget_epochs=3,
        )
        assert result.best.val_loss <= min(t.val_loss for t in result.trials)

    def test_empty_grid_rejected(self):
        train_data, val_data = self._data()
        with pytest.raises(ValueError):
            hyper_search(
                TOY_CONFIG,
                train_data,
                val_data,
                TrainConfig(epochs=4, batch_size=8, patience=2),
                gru_units_grid=(),
            )
