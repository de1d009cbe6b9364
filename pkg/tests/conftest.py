import numpy as np
import pytest

from kineme_lab.ingest import AudioTrack, AUSeries, HeadPoseSeries


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_pose(frames, fps=30.0, video_id="v0"):
    return HeadPoseSeries(frames=np.asarray(frames, dtype=float), fps=fps, video_id=video_id)


def make_au(frames, fps=30.0, video_id="v0"):
    return AUSeries(frames=np.asarray(frames, dtype=float), fps=fps, video_id=video_id)


def make_track(samples, sr=16000, video_id="v0"):
    return AudioTrack(samples=np.asarray(samples, dtype=float), sample_rate=sr, video_id=video_id)


@pytest.fixture
def sine_pose():
    """15 s of gentle sinusoidal head motion at 30 fps."""
    t = np.arange(450) / 30.0
    frames = np.stack(
        [0.2 * np.sin(2 * np.pi * 1.0 * t),
         0.15 * np.sin(2 * np.pi * 2.0 * t),
         0.1 * np.sin(2 * np.pi * 3.0 * t)],
        axis=1,
    )
    return make_pose(frames)
