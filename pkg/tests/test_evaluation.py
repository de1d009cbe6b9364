import numpy as np
import pytest

from kineme_lab.errors import ConfigurationError
from kineme_lab.evaluation import (
    ModelSpec,
    VideoRecord,
    aggregate_video,
    binary_f1,
    compute_metrics,
    cross_validate,
    dichotomize,
    make_chunks,
    pearson,
    run_split,
    sweep_slices,
)


def make_video(video_id, n_windows, score, k=4, seed=0):
    rng = np.random.default_rng(seed)
    kin = np.zeros((n_windows, k))
    kin[np.arange(n_windows), rng.integers(0, k, size=n_windows)] = 1.0
    return VideoRecord(
        video_id=video_id,
        kineme=kin,
        au=(rng.uniform(size=(n_windows, 17)) < 0.3).astype(float),
        speech=rng.normal(size=(n_windows, 23)),
        score=score,
    )


def planted_videos(n=24, n_windows=14, seed=0):
    """Corpus whose score is recoverable from all three channels."""
    rng = np.random.default_rng(seed)
    videos = []
    for i in range(n):
        score = float(rng.uniform())
        kin = np.zeros((n_windows, 4))
        ids = np.where(rng.uniform(size=n_windows) < score, 0, rng.integers(1, 4, n_windows))
        kin[np.arange(n_windows), ids] = 1.0
        au = np.tile((rng.uniform(size=17) < 0.3).astype(float), (n_windows, 1))
        speech = rng.normal(size=(n_windows, 23)) * 0.1
        speech[:, 0] += score * 5.0
        videos.append(VideoRecord(f"v{i:02d}", kin, au, speech, score))
    return videos


class TestDichotomize:
    def test_median_split(self):
        labels = dichotomize(np.array([0.2, 0.4, 0.6, 0.8]), [0, 1, 2, 3])
        np.testing.assert_array_equal(labels, [0, 0, 1, 1])

    def test_all_equal_scores_label_positive(self):
        labels = dichotomize(np.full(5, 0.7), [0, 1, 2, 3, 4])
        np.testing.assert_array_equal(labels, 1)

    def test_score_at_median_is_positive(self):
        labels = dichotomize(np.array([0.1, 0.5, 0.9]), [0, 1, 2])
        assert labels[1] == 1

    def test_median_uses_training_indices_only(self):
        scores = np.array([0.0, 0.1, 0.2, 10.0])
        labels = dichotomize(scores, [0, 1, 2])
        np.testing.assert_array_equal(labels, [0, 1, 1, 1])


class TestMakeChunks:
    def test_full_video_slice(self):
        chunks = make_chunks([make_video("a", 14, 0.5)], slice_len_s=15)
        assert len(chunks) == 1
        assert chunks.chunks[0].window_count == 14

    def test_five_second_tiling(self):
        chunks = make_chunks([make_video("a", 14, 0.5)], slice_len_s=5, hop_s=5)
        assert len(chunks) == 3
        assert all(c.window_count == 4 for c in chunks.chunks)
        assert [c.window_start for c in chunks.chunks] == [0, 5, 10]

    def test_minimum_thin_slice(self):
        chunks = make_chunks([make_video("a", 14, 0.5)], slice_len_s=2)
        assert all(c.window_count == 1 for c in chunks.chunks)
        assert len(chunks) == 7

    def test_short_video_skipped_with_warning(self, caplog):
        videos = [make_video("short", 3, 0.5), make_video("long", 14, 0.5)]
        with caplog.at_level("WARNING"):
            chunks = make_chunks(videos, slice_len_s=10)
        assert {c.video_id for c in chunks.chunks} == {"long"}
        assert "short" in caplog.text

    def test_labels_inherited(self):
        chunks = make_chunks([make_video("a", 14, 0.77)], slice_len_s=5)
        assert all(c.score == 0.77 for c in chunks.chunks)

    def test_non_integer_slice_rejected(self):
        with pytest.raises(ConfigurationError):
            make_chunks([make_video("a", 14, 0.5)], slice_len_s=2.5)


class TestAggregateVideo:
    def test_majority_vote(self):
        assert aggregate_video([0.9, 0.8, 0.1], "cls") == 1.0

    def test_mean_for_regression(self):
        assert aggregate_video([0.4, 0.6], "reg") == pytest.approx(0.5)

    def test_single_chunk_identity(self):
        assert aggregate_video([0.37], "reg") == pytest.approx(0.37)

    def test_tie_goes_to_positive(self):
        assert aggregate_video([0.9, 0.1], "cls") == 1.0

    def test_odd_count_never_ties(self, rng):
        for _ in range(50):
            preds = rng.uniform(size=7)
            votes = (preds >= 0.5).astype(int)
            assert votes.sum() * 2 != votes.size


class TestComputeMetrics:
    def test_perfect_regression(self, rng):
        targets = rng.uniform(size=20)
        report = compute_metrics(targets, targets, "reg")
        assert report.pcc == pytest.approx(1.0)
        assert report.acc == pytest.approx(1.0)
        assert report.mae == 0.0

    def test_anticorrelation(self):
        targets = np.array([0.2, 0.4, 0.6, 0.8])
        report = compute_metrics(1.0 - targets, targets, "reg")
        assert report.pcc == pytest.approx(-1.0)

    def test_hand_computed_confusion_matrix(self):
        report = compute_metrics([1.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], "cls")
        assert report.acc == pytest.approx(0.75)
        assert report.f1 == pytest.approx(2.0 / 3.0)

    def test_reg_acc_plus_mae_is_exactly_one(self, rng):
        preds = rng.uniform(size=31)
        targets = rng.uniform(size=31)
        report = compute_metrics(preds, targets, "reg")
        assert report.acc + report.mae == 1.0

    def test_constant_predictions_flagged_degenerate(self, rng):
        report = compute_metrics(np.full(10, 0.5), rng.uniform(size=10), "reg")
        assert report.degenerate
        assert report.pcc == 0.0

    def test_permutation_invariance(self, rng):
        preds = rng.uniform(size=25)
        targets = rng.uniform(size=25)
        perm = rng.permutation(25)
        a = compute_metrics(preds, targets, "reg")
        b = compute_metrics(preds[perm], targets[perm], "reg")
        assert a.pcc == pytest.approx(b.pcc, abs=1e-12)
        assert a.mae == pytest.approx(b.mae, abs=1e-12)

    def test_metric_primitives(self):
        assert binary_f1(np.array([1, 1, 0]), np.array([1, 0, 0])) == pytest.approx(2 / 3)
        assert np.isnan(pearson(np.ones(5), np.arange(5.0)))


class TestRunSplit:
    def test_split_predictions_align(self):
        videos = planted_videos(n=12)
        spec = ModelSpec(arch="aud", task="reg", slice_len_s=5, hidden_dim=4, max_epochs=5)
        pred = run_split(videos, np.arange(8), np.array([8, 9]), np.array([10, 11]), spec, seed=0)
        assert pred.chunk_preds.shape == pred.chunk_targets.shape
        assert len(pred.video_ids) == 2
        assert pred.video_preds.shape == (2,)

    def test_video_pred_is_mean_of_chunk_preds(self):
        videos = planted_videos(n=12)
        spec = ModelSpec(arch="aud", task="reg", slice_len_s=5, hidden_dim=4, max_epochs=5)
        pred = run_split(videos, np.arange(8), np.array([8, 9]), np.array([10, 11]), spec, seed=0)
        first_video = pred.video_ids[0]
        # chunks come out in video order: 3 chunks per 15 s video at slice 5
        assert pred.video_preds[0] == pytest.approx(np.mean(pred.chunk_preds[:3]), abs=1e-12)


class TestCrossValidate:
    def test_leave_one_out_boundary(self):
        videos = planted_videos(n=10)
        spec = ModelSpec(arch="aud", task="reg", slice_len_s=15, hidden_dim=4, max_epochs=3)
        result = cross_validate(videos, spec, folds=10, repeats=1, seed=0)
        assert result.video.n == 10  # each video tested exactly once

    def test_more_folds_than_videos_rejected(self):
        with pytest.raises(ConfigurationError):
            cross_validate(planted_videos(n=4), ModelSpec("aud", "reg", 5), folds=10)

    def test_fold_partition_is_exact(self):
        videos = planted_videos(n=12)
        n = len(videos)
        rng = np.random.default_rng(np.random.SeedSequence([3, 0]))
        perm = rng.permutation(n)
        folds = np.array_split(perm, 4)
        seen = np.concatenate(folds)
        assert sorted(seen.tolist()) == list(range(n))

    def test_classification_path(self):
        videos = planted_videos(n=12)
        spec = ModelSpec(arch="aud", task="cls", slice_len_s=15, hidden_dim=4, max_epochs=3)
        result = cross_validate(videos, spec, folds=3, repeats=1, seed=1)
        assert 0.0 <= result.video.acc <= 1.0
        assert result.chunk.f1 is not None

    def test_regression_aggregate_identity(self):
        videos = planted_videos(n=12)
        spec = ModelSpec(arch="aud", task="reg", slice_len_s=15, hidden_dim=4, max_epochs=3)
        result = cross_validate(videos, spec, folds=3, repeats=2, seed=1)
        assert result.video.acc + result.video.mae == 1.0


class TestSweep:
    def test_sweep_emits_report_and_curves(self, tmp_path):
        videos = planted_videos(n=12)
        spec = ModelSpec(arch="aud", task="reg", slice_len_s=5, trait="E",
                         hidden_dim=4, max_epochs=3)
        results = sweep_slices(videos, spec, [5, 15], folds=3, repeats=1, seed=0,
                               out_dir=tmp_path)
        assert len(results) == 2
        report = (tmp_path / "report.csv").read_text()
        assert report.startswith("trait,arch,slice_s,level,acc,f1,pcc,mae,n,std")
        assert len(report.strip().splitlines()) == 1 + 4  # 2 slices x 2 levels
        assert (tmp_path / "curves.svg").read_text().startswith("<svg")

    def test_full_length_slice_video_equals_chunk(self):
        videos = planted_videos(n=12)
        spec = ModelSpec(arch="aud", task="reg", slice_len_s=15, hidden_dim=4, max_epochs=3)
        result = cross_validate(videos, spec, folds=3, repeats=1, seed=0)
        assert result.chunk.pcc == pytest.approx(result.video.pcc, abs=1e-12)

    def test_sub_two_second_slice_rejected(self):
        with pytest.raises(ConfigurationError):
            sweep_slices(planted_videos(n=6), ModelSpec("aud", "reg", 5), [1])
