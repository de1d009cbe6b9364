"""Dominant-AU window encoding.

An AU is "dominant" in a window when its mean intensity over the window
strictly exceeds a reference threshold; the default reference is the mean
intensity of that AU over the whole video, which makes the encoding invariant
to per-recording scale and offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, TooShortError
from .ingest import AUSeries, N_AUS, WindowPlan


@dataclass(frozen=True)
class AUWindowSequence:
    video_id: str
    vectors: np.ndarray  # (n_windows, 17) binary
    thresholds: np.ndarray  # (17,) mean-intensity thresholds used

    def __len__(self) -> int:
        return self.vectors.shape[0]


def compute_au_thresholds(series: AUSeries) -> np.ndarray:
    """Per-AU mean intensity over all frames of one video."""
    if len(series) < 1:
        raise TooShortError("AU series is empty")
    return series.frames.mean(axis=0)


def corpus_au_thresholds(series_list: list[AUSeries]) -> np.ndarray:
    """Corpus-scope alternative: mean intensity pooled over all videos' frames."""
    if not series_list:
        raise TooShortError("no AU series given")
    stacked = np.concatenate([s.frames for s in series_list], axis=0)
    return stacked.mean(axis=0)


def encode_au_windows(
    series: AUSeries, plan: WindowPlan, thresholds: np.ndarray | None = None
) -> AUWindowSequence:
    """Binary 17-vector per window: 1 iff the window mean is strictly above threshold.

    A constant stream therefore encodes to all zeros (its window means equal
    the global mean, never exceed it).
    """
    if thresholds is None:
        thresholds = compute_au_thresholds(series)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.shape != (N_AUS,):
        raise ShapeError(f"thresholds must be ({N_AUS},), got {thresholds.shape}")
    if plan.boundaries[-1][1] > len(series):
        raise ShapeError(
            f"plan covers {plan.boundaries[-1][1]} frames but series has {len(series)}"
        )
    vectors = np.zeros((plan.n_windows, N_AUS))
    for w, (start, end) in enumerate(plan.boundaries):
        window_mean = series.frames[start:end].mean(axis=0)
        vectors[w] = (window_mean > thresholds).astype(np.float64)
    return AUWindowSequence(video_id=series.video_id, vectors=vectors, thresholds=thresholds)
