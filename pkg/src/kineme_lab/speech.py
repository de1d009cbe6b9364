"""Low-level speech descriptors aggregated into per-window vectors.

Descriptors are extracted over 93 ms frames (23 ms overlap, i.e. 70 ms hop):
fundamental frequency + voicing from normalized autocorrelation, zero-crossing
rate, and 20 mel-frequency cepstral coefficients. Frame vectors are averaged
within each 2 s window and z-normalized per dimension over the training split.

MFCC pipeline: Hann window -> zero-padded power-of-two FFT -> power spectrum
-> triangular mel filterbank (HTK mel scale m = 2595 log10(1 + f/700), 26
filters spanning 0..sr/2) -> natural log floored at 1e-10 -> orthonormal
DCT-II -> first 20 coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, TooShortError
from .ingest import AudioTrack, WindowPlan

N_MFCC = 20
N_MEL = 26
LLD_DIM = 3 + N_MFCC
LLD_NAMES: tuple[str, ...] = ("f0", "voicing", "zcr") + tuple(
    f"mfcc{i + 1}" for i in range(N_MFCC)
)
LOG_FLOOR = 1e-10
VOICING_THRESHOLD = 0.3
STD_FLOOR = 1e-8

DEFAULT_FRAME_MS = 93.0
DEFAULT_HOP_MS = 70.0  # 93 ms frames with a 23 ms overlap


@dataclass(frozen=True)
class LLDFrame:
    """Descriptors of one analysis frame; 23 scalars total."""

    f0: float  # Hz, 0 when unvoiced
    voicing: float  # [0, 1]
    zcr: float  # [0, 1]
    mfcc: np.ndarray  # (20,)
    center_s: float  # frame center on the track timeline

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.f0, self.voicing, self.zcr], self.mfcc))


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray  # (23,)
    std: np.ndarray  # (23,), floored


@dataclass(frozen=True)
class SpeechWindowSequence:
    video_id: str
    vectors: np.ndarray  # (n_windows, 23)
    norm_stats: NormStats | None = None

    def __len__(self) -> int:
        return self.vectors.shape[0]


def frame_audio(
    track: AudioTrack,
    frame_len_ms: float = DEFAULT_FRAME_MS,
    hop_ms: float = DEFAULT_HOP_MS,
) -> tuple[np.ndarray, np.ndarray]:
    """Slice a track into raw frames; returns (frames (n, flen), centers_s (n,)).

    Frames are raw samples; spectral ops apply their own window function.
    """
    sr = track.sample_rate
    flen = int(math.floor(frame_len_ms / 1000.0 * sr + 0.5))
    hop = int(math.floor(hop_ms / 1000.0 * sr + 0.5))
    if hop < 1 or flen < 2:
        raise ConfigurationError("frame/hop too short at this sample rate")
    n_samples = len(track)
    if n_samples < flen:
        raise TooShortError(f"track of {n_samples} samples shorter than one {flen}-sample frame")
    n_frames = 1 + (n_samples - flen) // hop
    idx = np.arange(flen)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = track.samples[idx]
    centers = (hop * np.arange(n_frames) + flen / 2.0) / sr
    return frames, centers


def zcr(frame: np.ndarray) -> float:
    """Sign changes between consecutive samples / (len - 1); zero counts as positive."""
    x = np.asarray(frame, dtype=np.float64)
    if x.shape[0] < 2:
        raise TooShortError("zcr needs at least two samples")
    signs = np.where(x >= 0, 1.0, -1.0)
    return float(np.count_nonzero(signs[1:] != signs[:-1]) / (x.shape[0] - 1))


def estimate_f0(
    frame: np.ndarray, sr: int, fmin: float = 60.0, fmax: float = 400.0
) -> tuple[float, float]:
    """Autocorrelation pitch tracker: returns (f0 in Hz, voicing in [0, 1]).

    Searches lags sr/fmax .. sr/fmin for the peak of the autocorrelation
    normalized by lag zero; the clamped peak value doubles as the voicing
    probability, and frames below the 0.3 voicing floor report f0 = 0.
    Amplitude-invariant by construction.
    """
    x = np.asarray(frame, dtype=np.float64)
    energy = float(x @ x)
    if energy <= 0.0:
        return 0.0, 0.0
    lag_min = int(round(sr / fmax))
    lag_max = min(int(round(sr / fmin)), x.shape[0] - 1)
    if lag_min < 1 or lag_min > lag_max:
        return 0.0, 0.0
    # Autocorrelation r(lag) = sum_t x[t] x[t+lag] for all lags at once via FFT.
    n_fft = 1
    while n_fft < 2 * x.shape[0]:
        n_fft *= 2
    spectrum = np.fft.rfft(x, n=n_fft)
    corr_full = np.fft.irfft(spectrum * spectrum.conj(), n=n_fft)[: x.shape[0]]
    corr = corr_full[lag_min : lag_max + 1]
    best = int(np.argmax(corr))
    voicing = float(np.clip(corr[best] / energy, 0.0, 1.0))
    if voicing < VOICING_THRESHOLD:
        return 0.0, voicing
    return sr / float(lag_min + best), voicing


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _hann_cached(n: int) -> np.ndarray:
    w = np.hanning(n)
    w.flags.writeable = False
    return w


@lru_cache(maxsize=8)
def _mel_filterbank_cached(sr: int, n_fft: int, n_mel: int) -> np.ndarray:
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(sr / 2.0), n_mel + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.arange(n_fft // 2 + 1) * (sr / n_fft)
    bank = np.zeros((n_mel, bin_freqs.shape[0]))
    for m in range(n_mel):
        left, center, right = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        bank[m] = np.maximum(0.0, np.minimum(up, down))
    bank.flags.writeable = False
    return bank


def mel_filterbank(sr: int, n_fft: int, n_mel: int = N_MEL) -> np.ndarray:
    """Triangular filters over FFT bin centers, (n_mel, n_fft // 2 + 1)."""
    return _mel_filterbank_cached(int(sr), int(n_fft), int(n_mel))


@lru_cache(maxsize=8)
def _dct_ortho_cached(n_out: int, n_in: int) -> np.ndarray:
    k = np.arange(n_out)[:, None]
    j = np.arange(n_in)[None, :]
    mat = np.cos(np.pi * k * (2 * j + 1) / (2.0 * n_in))
    mat *= np.sqrt(2.0 / n_in)
    mat[0] *= np.sqrt(0.5)
    mat.flags.writeable = False
    return mat


def dct_ortho_matrix(n_out: int, n_in: int) -> np.ndarray:
    """First n_out rows of the orthonormal DCT-II transform of size n_in."""
    return _dct_ortho_cached(int(n_out), int(n_in))


def mfcc(frame: np.ndarray, sr: int, n_mel: int = N_MEL, n_coef: int = N_MFCC) -> np.ndarray:
    """Mel-frequency cepstral coefficients of one raw frame."""
    x = np.asarray(frame, dtype=np.float64)
    n_fft = 1
    while n_fft < x.shape[0]:
        n_fft *= 2
    windowed = x * _hann_cached(x.shape[0])
    spectrum = np.fft.rfft(windowed, n=n_fft)
    power = (spectrum.real ** 2 + spectrum.imag ** 2)
    mel_energy = mel_filterbank(sr, n_fft, n_mel) @ power
    log_mel = np.log(np.maximum(mel_energy, LOG_FLOOR))
    return dct_ortho_matrix(n_coef, n_mel) @ log_mel


def compute_llds(
    track: AudioTrack,
    frame_len_ms: float = DEFAULT_FRAME_MS,
    hop_ms: float = DEFAULT_HOP_MS,
    fmin: float = 60.0,
    fmax: float = 400.0,
) -> list[LLDFrame]:
    """Per-frame descriptor extraction over the whole track."""
    frames, centers = frame_audio(track, frame_len_ms, hop_ms)
    out = []
    for row, center in zip(frames, centers):
        f0, voicing = estimate_f0(row, track.sample_rate, fmin, fmax)
        out.append(
            LLDFrame(
                f0=f0,
                voicing=voicing,
                zcr=zcr(row),
                mfcc=mfcc(row, track.sample_rate),
                center_s=float(center),
            )
        )
    return out


def aggregate_speech(frames: list[LLDFrame], plan: WindowPlan) -> np.ndarray:
    """Mean descriptor vector per window; a frame belongs to the window that
    contains its center. `plan` must be built on the audio timeline.

    Returns (n_windows, 23) in the order [f0, voicing, zcr, mfcc1..mfcc20].
    """
    if not frames:
        raise TooShortError("no descriptor frames")
    centers = np.array([f.center_s for f in frames])
    matrix = np.stack([f.as_vector() for f in frames])
    out = np.empty((plan.n_windows, LLD_DIM))
    for w, (start, end) in enumerate(plan.boundaries):
        in_window = (centers >= start / plan.rate) & (centers < end / plan.rate)
        if not in_window.any():
            raise TooShortError(f"window {w} covers no descriptor frame")
        out[w] = matrix[in_window].mean(axis=0)
    return out


def z_normalize(vectors: np.ndarray) -> tuple[np.ndarray, NormStats]:
    """Zero-mean unit-variance per dimension; std floored at 1e-8.

    Stats must come from the training split and be reused (`apply_norm`) for
    validation/test vectors.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[0] < 2:
        raise TooShortError("normalization needs at least two vectors")
    mean = vectors.mean(axis=0)
    std = np.maximum(vectors.std(axis=0), STD_FLOOR)
    return (vectors - mean) / std, NormStats(mean=mean, std=std)


def apply_norm(vectors: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(vectors, dtype=np.float64) - stats.mean) / stats.std


def denormalize(vectors: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(vectors, dtype=np.float64) * stats.std + stats.mean
