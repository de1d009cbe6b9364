import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kineme_lab.errors import ShapeError
from kineme_lab.facial import compute_au_thresholds, corpus_au_thresholds, encode_au_windows
from kineme_lab.ingest import plan_windows

from conftest import make_au


def au_frames(n, fill=0.0):
    return np.full((n, 17), fill)


class TestThresholds:
    def test_mean_intensity(self):
        frames = au_frames(3)
        frames[:, 2] = [1.0, 2.0, 3.0]
        thresholds = compute_au_thresholds(make_au(frames))
        assert thresholds[2] == pytest.approx(2.0)

    def test_all_zero_stream(self):
        np.testing.assert_array_equal(compute_au_thresholds(make_au(au_frames(10))), 0.0)

    def test_single_frame(self):
        frames = au_frames(1, fill=1.5)
        np.testing.assert_allclose(compute_au_thresholds(make_au(frames)), 1.5)

    def test_corpus_scope_pools_frames(self):
        a = au_frames(2, fill=1.0)
        b = au_frames(2, fill=3.0)
        pooled = corpus_au_thresholds([make_au(a), make_au(b)])
        np.testing.assert_allclose(pooled, 2.0)


class TestEncodeWindows:
    def test_constant_stream_encodes_all_zero(self):
        series = make_au(au_frames(120, fill=2.5))
        plan = plan_windows(120, 30.0)
        seq = encode_au_windows(series, plan, compute_au_thresholds(series))
        np.testing.assert_array_equal(seq.vectors, 0.0)

    def test_step_signal_flips_last_window(self):
        # 4 s at 30 fps; AU12 (index 8) is 0 then 4 -> global mean 2.0
        frames = au_frames(120)
        frames[60:, 8] = 4.0
        series = make_au(frames)
        plan = plan_windows(120, 30.0)
        seq = encode_au_windows(series, plan, compute_au_thresholds(series))
        assert seq.vectors[0, 8] == 0.0  # window mean 0 < 2
        assert seq.vectors[1, 8] == 0.0  # window mean 2, not strictly greater
        assert seq.vectors[-1, 8] == 1.0  # window mean 4 > 2

    def test_fics_window_count(self):
        series = make_au(au_frames(450, fill=1.0))
        seq = encode_au_windows(series, plan_windows(450, 30.0))
        assert len(seq) == 14
        assert seq.vectors.shape == (14, 17)

    def test_plan_longer_than_series(self):
        series = make_au(au_frames(60))
        plan = plan_windows(120, 30.0)
        with pytest.raises(ShapeError):
            encode_au_windows(series, plan, np.zeros(17))

    def test_output_is_binary(self, rng):
        series = make_au(rng.uniform(0.0, 5.0, size=(150, 17)))
        seq = encode_au_windows(series, plan_windows(150, 30.0))
        assert set(np.unique(seq.vectors)) <= {0.0, 1.0}

    @given(st.floats(min_value=0.1, max_value=3.0))
    @settings(max_examples=20, deadline=None)
    def test_scaling_one_au_is_invariant(self, scale):
        rng = np.random.default_rng(7)
        frames = rng.uniform(0.0, 1.5, size=(150, 17))
        plan = plan_windows(150, 30.0)
        base = encode_au_windows(make_au(frames), plan)
        scaled = frames.copy()
        scaled[:, 4] *= scale
        got = encode_au_windows(make_au(scaled), plan)
        np.testing.assert_array_equal(base.vectors, got.vectors)

    def test_shifting_one_au_is_invariant(self, rng):
        frames = rng.uniform(0.0, 1.5, size=(150, 17))
        plan = plan_windows(150, 30.0)
        base = encode_au_windows(make_au(frames), plan)
        shifted = frames.copy()
        shifted[:, 9] += 2.0
        got = encode_au_windows(make_au(shifted), plan)
        np.testing.assert_array_equal(base.vectors, got.vectors)
