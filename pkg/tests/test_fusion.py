import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kineme_lab.errors import ConfigurationError, ShapeError
from kineme_lab.fusion import (
    ARCH_MODALITIES,
    AlignedSample,
    AttentionTrace,
    attention_fusion_predict,
    build_model,
    decision_fuse,
    feature_fusion_predict,
    load_model,
    model_input,
    save_model,
    unimodal_predict,
)
from kineme_lab.neural import TrainConfig, finite_difference_check, train
from kineme_lab.oracles import decision_fusion_exhaustive

DIMS = {"kin": 16, "au": 17, "aud": 23}


def make_sample(rng, L=4, target=0.5, chunk_id="c0"):
    kin = np.zeros((L, 16))
    kin[np.arange(L), rng.integers(0, 16, size=L)] = 1.0
    return AlignedSample(
        chunk_id=chunk_id,
        kineme=kin,
        au=(rng.uniform(size=(L, 17)) < 0.3).astype(float),
        speech=rng.normal(size=(L, 23)),
        target=target,
    )


class TestAlignedSample:
    def test_length_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            AlignedSample(
                chunk_id="c0",
                kineme=np.zeros((4, 16)),
                au=np.zeros((3, 17)),
                speech=np.zeros((4, 23)),
                target=0.0,
            )

    def test_model_input_selects_modalities(self, rng):
        sample = make_sample(rng)
        assert model_input(sample, ("kin",)).shape == (4, 16)
        xs = model_input(sample, ("au", "aud"))
        assert xs[0].shape == (4, 17) and xs[1].shape == (4, 23)


class TestUnimodal:
    def test_classification_output_in_unit_interval(self, rng):
        model = build_model("kin", DIMS, hidden_dim=8, task="cls", seed=0)
        for _ in range(10):
            sample = make_sample(rng)
            assert 0.0 < unimodal_predict(sample.kineme, model) < 1.0

    def test_deterministic(self, rng):
        model = build_model("aud", DIMS, hidden_dim=8, task="reg", seed=0)
        x = rng.normal(size=(5, 23))
        assert unimodal_predict(x, model) == unimodal_predict(x, model)

    def test_learns_planted_kineme_majority(self, rng):
        # label = whether kineme 3 occupies more than half the windows
        data = []
        for i in range(80):
            L = 6
            majority = i % 2 == 0
            ids = np.where(
                rng.uniform(size=L) < (0.85 if majority else 0.12), 3,
                rng.integers(0, 16, size=L),
            )
            onehot = np.zeros((L, 16))
            onehot[np.arange(L), ids] = 1.0
            data.append((onehot, float((onehot[:, 3].mean() > 0.5))))
        model = build_model("kin", DIMS, hidden_dim=16, task="cls", seed=3)
        config = TrainConfig(loss="bce", max_epochs=60, patience=60, batch_size=16, seed=3)
        train(model, data[:60], data[60:70], config)
        held_out = data[70:]
        acc = np.mean([(model.forward(x) >= 0.5) == (y == 1.0) for x, y in held_out])
        assert acc >= 0.9


class TestFeatureFusion:
    def test_zero_weights_give_constant_bias_output(self, rng):
        model = build_model("ff-tri", DIMS, hidden_dim=8, task="reg", seed=0)
        for key, value in model.parameters().items():
            value[...] = 0.0
        model.head.b[...] = 0.25
        a = feature_fusion_predict(make_sample(rng), model)
        b = feature_fusion_predict(make_sample(rng, L=7), model)
        assert a == pytest.approx(0.25)
        assert b == pytest.approx(0.25)

    def test_gradients_bimodal_and_trimodal(self, rng):
        for arch in ("ff-kin-au", "ff-tri"):
            model = build_model(arch, DIMS, hidden_dim=4, task="reg", seed=1)
            mods = ARCH_MODALITIES[arch]
            samples = []
            for _ in range(2):
                sample = make_sample(rng, L=3, target=float(rng.uniform()))
                samples.append((model_input(sample, mods), sample.target))
            assert finite_difference_check(model, "mae", samples) < 1e-4

    def test_missing_modality_rejected(self, rng):
        model = build_model("ff-tri", DIMS, hidden_dim=4, task="reg", seed=0)
        sample = make_sample(rng)
        with pytest.raises(ConfigurationError):
            model.forward((sample.kineme, sample.au))

    def test_zeroed_modality_equals_reduced_graph(self, rng):
        """Zeroing one modality's input must match a forward that only sees the
        remaining modalities' parameters (shared weights, zero input path)."""
        tri = build_model("ff-tri", DIMS, hidden_dim=6, task="reg", seed=4)
        sample = make_sample(rng, L=5)
        zeroed = tri.forward((np.zeros_like(sample.kineme), sample.au, sample.speech))
        # reduced graph: same au/aud weights, kin LSTM fed zeros explicitly
        h_kin = tri.lstms["kin"].forward(np.zeros((5, 16)))[-1]
        h_au = tri.lstms["au"].forward(sample.au)[-1]
        h_aud = tri.lstms["aud"].forward(sample.speech)[-1]
        manual = tri.head.forward(np.concatenate([h_kin, h_au, h_aud]))[0]
        assert zeroed == pytest.approx(float(manual), abs=1e-12)


class TestAttentionFusion:
    def test_weights_on_simplex_every_window(self, rng):
        model = build_model("af-tri", DIMS, hidden_dim=8, task="reg", seed=0)
        sample = make_sample(rng, L=6)
        _, trace = attention_fusion_predict(sample, model)
        assert trace.weights.shape == (6, 3)
        np.testing.assert_allclose(trace.weights.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(trace.weights >= 0.0)

    def test_equal_logits_give_uniform_weights(self, rng):
        model = build_model("af-tri", DIMS, hidden_dim=8, task="reg", seed=0)
        model.att.W[...] = 0.0
        model.att.b[...] = 0.0
        sample = make_sample(rng, L=5)
        _, trace = attention_fusion_predict(sample, model)
        np.testing.assert_allclose(trace.weights, 1.0 / 3.0, atol=1e-12)

    def test_gradient_check(self, rng):
        model = build_model("af-tri", DIMS, hidden_dim=4, task="cls", seed=2)
        samples = []
        for _ in range(2):
            sample = make_sample(rng, L=3, target=float(rng.integers(0, 2)))
            samples.append((model_input(sample, ("kin", "au", "aud")), sample.target))
        assert finite_difference_check(model, "bce", samples) < 1e-4

    def test_aggregate_is_mean_of_windows(self, rng):
        weights = rng.dirichlet(np.ones(3), size=9)
        trace = AttentionTrace(chunk_id="c", weights=weights)
        np.testing.assert_allclose(trace.aggregate, weights.mean(axis=0), atol=1e-12)


class TestDecisionFusion:
    def test_perfect_predictor_dominates(self, rng):
        labels = rng.uniform(size=50)
        noise = rng.uniform(size=50)
        result = decision_fuse([labels, noise], labels, metric="pcc")
        assert result.weights == (1.0, 0.0)

    def test_identical_predictors_tie_break(self, rng):
        p = rng.uniform(size=30)
        labels = rng.uniform(size=30)
        result = decision_fuse([p, p.copy()], labels, metric="pcc")
        assert result.weights == (0.0, 1.0)

    def test_weights_are_grid_multiples(self, rng):
        preds = [rng.uniform(size=40) for _ in range(3)]
        labels = rng.uniform(size=40)
        result = decision_fuse(preds, labels, metric="pcc")
        for w in result.weights:
            assert abs(w * 20 - round(w * 20)) < 1e-9
        assert sum(result.weights) == pytest.approx(1.0)

    def test_matches_independent_exhaustive_oracle(self, rng):
        for metric in ("pcc", "f1"):
            labels_raw = rng.uniform(size=25)
            labels = labels_raw if metric == "pcc" else (labels_raw >= 0.5).astype(int)
            preds = [labels_raw + rng.normal(0, s, size=25) for s in (0.2, 0.4, 0.8)]
            got = decision_fuse(preds, labels, metric=metric)
            want_w, _ = decision_fusion_exhaustive(preds, labels, metric=metric)
            assert tuple(got.weights) == tuple(want_w)

    def test_constant_predictions_score_neg_inf_not_crash(self, rng):
        labels = rng.uniform(size=20)
        constant = np.full(20, 0.5)
        result = decision_fuse([constant, constant + 0.0], labels, metric="pcc")
        assert result.score == -np.inf

    @given(st.integers(min_value=0, max_value=1000))
    @settings(max_examples=25, deadline=None)
    def test_fused_score_is_convex_combination(self, seed):
        rng = np.random.default_rng(seed)
        preds = [rng.uniform(size=15) for _ in range(2)]
        labels = rng.uniform(size=15)
        result = decision_fuse(preds, labels, metric="pcc")
        fused = result.weights[0] * preds[0] + result.weights[1] * preds[1]
        lo = np.minimum(preds[0], preds[1])
        hi = np.maximum(preds[0], preds[1])
        assert np.all(fused >= lo - 1e-12)
        assert np.all(fused <= hi + 1e-12)

    def test_metric_validation(self, rng):
        with pytest.raises(ConfigurationError):
            decision_fuse([rng.uniform(size=5)] * 2, rng.uniform(size=5), metric="auc")


class TestCheckpoints:
    @pytest.mark.parametrize("arch", ["kin", "ff-kin-aud", "ff-tri", "af-tri"])
    def test_round_trip_preserves_predictions(self, tmp_path, rng, arch):
        model = build_model(arch, DIMS, hidden_dim=6, task="reg", seed=5)
        sample = make_sample(rng, L=4)
        x = model_input(sample, ARCH_MODALITIES[arch])
        before = model.forward(x)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.forward(x) == pytest.approx(before, abs=0.0)

    def test_checkpoints_bit_identical_for_same_seed(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_model(build_model("af-tri", DIMS, hidden_dim=6, task="cls", seed=9), a)
        save_model(build_model("af-tri", DIMS, hidden_dim=6, task="cls", seed=9), b)
        assert a.read_bytes() == b.read_bytes()
