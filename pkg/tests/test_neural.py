import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kineme_lab.errors import ConfigurationError, TrainingDivergedError
from kineme_lab.fusion import build_model
from kineme_lab.neural import (
    Adam,
    Dense,
    LayerNorm,
    LSTMLayer,
    TrainConfig,
    bce,
    bce_grad,
    clip_global_norm,
    finite_difference_check,
    layer_norm,
    mae,
    softmax,
    train,
)


class TestLSTMForward:
    def test_zero_weights_and_inputs_give_zero_states(self, rng):
        layer = LSTMLayer(3, 4, rng)
        for p in layer.parameters().values():
            p[...] = 0.0
        hs = layer.forward(np.zeros((5, 3)))
        np.testing.assert_array_equal(hs, 0.0)

    def test_hidden_states_bounded(self, rng):
        layer = LSTMLayer(3, 8, rng)
        hs = layer.forward(rng.uniform(-100, 100, size=(20, 3)))
        assert np.all(np.abs(hs) < 1.0)

    def test_forward_is_pure(self, rng):
        layer = LSTMLayer(3, 4, rng)
        x = rng.normal(size=(6, 3))
        np.testing.assert_array_equal(layer.forward(x), layer.forward(x))

    def test_forget_bias_initialized_positive(self, rng):
        layer = LSTMLayer(3, 4, rng)
        assert np.all(layer.b[4:8] == 1.0)

    def test_gradient_check_small_net(self, rng):
        model = build_model("kin", {"kin": 3}, hidden_dim=4, task="reg", seed=0)
        samples = [(rng.uniform(-1, 1, size=(5, 3)), float(rng.uniform())) for _ in range(2)]
        assert finite_difference_check(model, "mae", samples) < 1e-4


class TestLayerNorm:
    def test_constant_input_maps_to_zero(self):
        out = layer_norm(np.full(8, 3.3), np.ones(8), np.zeros(8))
        np.testing.assert_allclose(out, 0.0, atol=1e-9)

    def test_fixed_point(self):
        x = np.array([1.0, -1.0])
        np.testing.assert_allclose(layer_norm(x, np.ones(2), np.zeros(2)), x, atol=1e-2)

    def test_output_statistics(self, rng):
        x = rng.normal(5.0, 3.0, size=64)
        out = layer_norm(x, np.ones(64), np.zeros(64))
        assert abs(out.mean()) < 1e-4
        assert abs(out.var() - 1.0) < 1e-4

    def test_layer_matches_functional(self, rng):
        layer = LayerNorm(10)
        x = rng.normal(size=10)
        np.testing.assert_allclose(layer.forward(x), layer_norm(x, layer.gain, layer.bias))


class TestLosses:
    def test_bce_closed_form(self):
        assert bce(0.5, 1.0) == pytest.approx(np.log(2.0))

    def test_mae_identity(self, rng):
        x = rng.uniform(size=10)
        assert mae(x, x) == 0.0

    def test_bce_gradient_matches_finite_differences(self):
        h = 1e-6
        for p, t in [(0.3, 1.0), (0.7, 0.0), (0.5, 1.0)]:
            numeric = (bce(p + h, t) - bce(p - h, t)) / (2 * h)
            assert float(bce_grad(p, t)) == pytest.approx(numeric, abs=1e-6)

    def test_bce_batch_mean(self):
        assert bce([0.5, 0.5], [1.0, 1.0]) == pytest.approx(np.log(2.0))


class TestAdam:
    def test_zero_gradient_is_identity(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        grads = {"w": np.zeros(3)}
        opt = Adam(lr=0.1)
        for _ in range(5):
            opt.step(params, grads)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0, 3.0])

    def test_step_moves_against_gradient(self):
        params = {"w": np.array([1.0])}
        opt = Adam(lr=0.1)
        opt.step(params, {"w": np.array([2.0])})
        assert params["w"][0] < 1.0

    def test_clip_global_norm(self):
        grads = {"a": np.array([3.0, 4.0]), "b": np.array([0.0])}
        clip_global_norm(grads, 1.0)
        total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        assert total == pytest.approx(1.0)


class _ScheduledModel:
    """Model stub whose validation loss follows a fixed schedule.

    One training batch per epoch advances the schedule; `theta` records the
    batch count so snapshot/restore behavior is observable.
    """

    def __init__(self, schedule):
        self.schedule = schedule
        self.n_batches = 0
        self.theta = np.array([0.0])

    def parameters(self):
        return {"theta": self.theta}

    def gradients(self):
        self.n_batches += 1
        self.theta[0] = float(self.n_batches)
        return {"theta": np.array([0.0])}

    def zero_grads(self):
        pass

    def forward(self, x):
        idx = min(self.n_batches, len(self.schedule) - 1)
        return self.schedule[idx]

    def backward(self, dpred):
        pass


class TestTrain:
    def test_patience_trace_semantics(self):
        # val losses 1.0, 0.9, 0.91, 0.92, 0.93, 0.94 with patience 4:
        # stop after epoch 6 and restore the epoch-2 parameters.
        schedule = [99.0, 1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.5, 0.4]
        model = _ScheduledModel(schedule)
        config = TrainConfig(loss="mae", max_epochs=50, patience=4, batch_size=32, seed=0)
        history = train(model, [(None, 0.0)], [(None, 0.0)], config)
        assert len(history.epochs) == 6
        assert history.best_epoch == 2
        assert [round(v, 4) for _, _, v in history.epochs] == [1.0, 0.9, 0.91, 0.92, 0.93, 0.94]
        assert model.theta[0] == 2.0  # parameters restored from the best epoch

    def test_runs_to_max_epochs_when_improving(self):
        schedule = [float(20 - i) for i in range(20)]
        model = _ScheduledModel(schedule)
        config = TrainConfig(loss="mae", max_epochs=7, patience=4, batch_size=8, seed=0)
        history = train(model, [(None, 0.0)], [(None, 0.0)], config)
        assert len(history.epochs) == 7
        assert history.best_epoch == 7

    def test_seeded_runs_are_bit_identical(self, rng):
        def run():
            model = build_model("kin", {"kin": 4}, hidden_dim=4, task="reg", seed=7)
            data = [
                (np.linspace(0, 1, 12).reshape(3, 4) * (i % 3), float(i % 2))
                for i in range(10)
            ]
            config = TrainConfig(loss="mae", max_epochs=5, patience=4, batch_size=4, seed=7)
            train(model, data, data[:3], config)
            return model.parameters()

        a, b = run(), run()
        for key in a:
            np.testing.assert_array_equal(a[key], b[key])

    def test_nan_loss_aborts_with_diagnostics(self):
        class NanModel(_ScheduledModel):
            def forward(self, x):
                return float("nan")

        model = NanModel([0.0])
        config = TrainConfig(loss="mae", max_epochs=3, patience=4, seed=0)
        with pytest.raises(TrainingDivergedError) as excinfo:
            train(model, [(None, 0.0)], [(None, 0.0)], config)
        assert excinfo.value.lr == config.lr
        assert excinfo.value.batch_index == 0

    def test_classification_targets_validated(self):
        model = _ScheduledModel([0.5])
        config = TrainConfig(loss="bce", max_epochs=1, seed=0)
        with pytest.raises(ConfigurationError):
            train(model, [(None, 0.4)], [(None, 1.0)], config)

    def test_linearly_separable_sequences(self, rng):
        # class = sign of the mean input value
        data = []
        for i in range(60):
            offset = 0.6 if i % 2 == 0 else -0.6
            x = rng.normal(offset, 0.2, size=(6, 3))
            data.append((x, float(i % 2 == 0)))
        model = build_model("kin", {"kin": 3}, hidden_dim=8, task="cls", seed=1)
        config = TrainConfig(loss="bce", max_epochs=50, patience=50, batch_size=16, seed=1)
        train(model, data[:48], data[48:], config)
        preds = [model.forward(x) >= 0.5 for x, _ in data[:48]]
        truth = [y == 1.0 for _, y in data[:48]]
        accuracy = np.mean([p == t for p, t in zip(preds, truth)])
        assert accuracy >= 0.95


class TestActivations:
    def test_sigmoid_head_strictly_inside_unit_interval(self, rng):
        head = Dense(4, 1, rng, activation="sigmoid")
        for _ in range(20):
            y = head.forward(rng.normal(scale=10.0, size=4))
            assert 0.0 < y[0] < 1.0

    def test_unknown_activation_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            Dense(3, 1, rng, activation="relu6")

    @given(st.lists(st.floats(min_value=-30, max_value=30), min_size=3, max_size=3))
    @settings(max_examples=50, deadline=None)
    def test_softmax_on_simplex(self, logits):
        s = softmax(np.array(logits))
        assert abs(s.sum() - 1.0) < 1e-9
        assert np.all(s >= 0.0)
