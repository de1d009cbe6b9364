"""Parsing, validation, and windowing of pose/AU/audio streams.

Everything downstream works on 2-second windows with 50% overlap; this module
owns the canonical window arithmetic (`plan_windows`) plus the readers for
tracker CSV output and PCM audio.
"""

from __future__ import annotations

import csv
import math
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    ParseError,
    SchemaError,
    ShapeError,
    TooShortError,
    UnsupportedFormatError,
    UnusableStreamError,
)

# OpenFace 2.x intensity-regression AU set, in column order.
AU_CODES: tuple[int, ...] = (1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45)
AU_NAMES: tuple[str, ...] = tuple(f"AU{c:02d}" for c in AU_CODES)
N_AUS = len(AU_CODES)

DEFAULT_POSE_COLUMNS = {
    "pitch": "pose_Rx",
    "yaw": "pose_Ry",
    "roll": "pose_Rz",
    "confidence": "confidence",
}
DEFAULT_FPS = 30.0
DEFAULT_CONFIDENCE_THRESHOLD = 0.75


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class HeadPoseSeries:
    """Per-frame (pitch, yaw, roll) rotation angles in radians."""

    frames: np.ndarray  # (T, 3) float64
    fps: float
    video_id: str

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != 3:
            raise ShapeError(f"pose frames must be (T, 3), got {frames.shape}")
        if frames.shape[0] < 1:
            raise TooShortError("pose series needs at least one frame")
        if not np.all(np.isfinite(frames)):
            raise ParseError("non-finite pose angle")
        if np.any(np.abs(frames) > np.pi + 1e-9):
            raise ParseError("pose angle outside [-pi, pi]")
        if not self.fps > 0:
            raise ConfigurationError(f"fps must be positive, got {self.fps}")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.fps


@dataclass(frozen=True)
class AUSeries:
    """Per-frame intensities for the 17-AU set, each value in [0, 5]."""

    frames: np.ndarray  # (T, 17) float64
    fps: float
    video_id: str
    presence: np.ndarray | None = None  # (T, 17) binary, optional

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != N_AUS:
            raise ShapeError(f"AU frames must be (T, {N_AUS}), got {frames.shape}")
        if frames.shape[0] < 1:
            raise TooShortError("AU series needs at least one frame")
        if not np.all(np.isfinite(frames)):
            raise ParseError("non-finite AU intensity")
        if np.any(frames < 0) or np.any(frames > 5):
            raise ParseError("AU intensity outside [0, 5]")
        if not self.fps > 0:
            raise ConfigurationError(f"fps must be positive, got {self.fps}")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)
        if self.presence is not None:
            presence = np.asarray(self.presence, dtype=np.float64)
            if presence.shape != frames.shape:
                raise ShapeError(f"presence must match frames, got {presence.shape}")
            presence.flags.writeable = False
            object.__setattr__(self, "presence", presence)

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class AudioTrack:
    """Mono amplitude sequence scaled to [-1, 1]."""

    samples: np.ndarray  # (n,) float64
    sample_rate: int
    video_id: str

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"audio samples must be 1-D, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ParseError("non-finite audio sample")
        if self.sample_rate < 8000:
            raise UnsupportedFormatError(
                f"sample rate {self.sample_rate} below the 8 kHz minimum"
            )
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class WindowPlan:
    """Window boundaries for one stream: 2 s windows, 1 s hop by default."""

    window_len_s: float
    hop_s: float
    n_windows: int
    boundaries: tuple[tuple[int, int], ...]  # (start, end) per window, end exclusive
    rate: float = field(default=0.0)

    def __post_init__(self):
        starts = [b[0] for b in self.boundaries]
        if starts != sorted(starts):
            raise ConfigurationError("window boundaries must be in increasing start order")


def plan_windows(
    stream_len: int,
    rate: float,
    window_len_s: float = 2.0,
    hop_s: float = 1.0,
) -> WindowPlan:
    """Slice a stream of `stream_len` frames/samples at `rate` per second.

    boundaries[i] = (round(i*hop*rate), round(i*hop*rate) + round(window*rate));
    a trailing partial window is discarded, never padded.
    """
    if window_len_s <= 0:
        raise ConfigurationError("window_len_s must be positive")
    if not 0 < hop_s <= window_len_s:
        raise ConfigurationError("hop_s must satisfy 0 < hop_s <= window_len_s")
    win = _round_half_up(window_len_s * rate)
    if win < 1:
        raise ConfigurationError("window shorter than one frame at this rate")
    if stream_len < win:
        raise TooShortError(
            f"stream of {stream_len} frames is shorter than one {window_len_s} s window"
        )
    boundaries = []
    i = 0
    while True:
        start = _round_half_up(i * hop_s * rate)
        end = start + win
        if end > stream_len:
            break
        boundaries.append((start, end))
        i += 1
    return WindowPlan(
        window_len_s=window_len_s,
        hop_s=hop_s,
        n_windows=len(boundaries),
        boundaries=tuple(boundaries),
        rate=rate,
    )


def _read_csv_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]
    return header, rows


def _cell_float(row: list[str], col_idx: int, row_idx: int) -> float:
    try:
        return float(row[col_idx].strip())
    except (ValueError, IndexError):
        raise ParseError(f"non-numeric cell in column {col_idx}", row=row_idx) from None


def _interpolate_failed(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Replace invalid entries by linear interpolation between valid neighbors.

    Leading/trailing invalid runs copy the nearest valid value.
    """
    if valid.all():
        return values
    idx = np.arange(len(values))
    out = values.copy()
    out[~valid] = np.interp(idx[~valid], idx[valid], values[valid])
    return out


def parse_pose_csv(
    path: str | Path,
    column_map: dict[str, str] | None = None,
    fps: float = DEFAULT_FPS,
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    video_id: str | None = None,
) -> HeadPoseSeries:
    """Read a tracker CSV into a HeadPoseSeries.

    Default column names follow the OpenFace 2.x convention (pose_Rx/Ry/Rz in
    radians plus a per-frame `confidence`). Rows whose confidence falls below
    the threshold are treated as failed tracking and filled by linear
    interpolation between their valid neighbors.
    """
    columns = dict(DEFAULT_POSE_COLUMNS)
    if column_map:
        columns.update(column_map)
    header, rows = _read_csv_rows(path)
    if not rows:
        raise TooShortError(f"{path}: no data rows")

    indices = {}
    for key in ("pitch", "yaw", "roll"):
        name = columns[key]
        if name not in header:
            raise SchemaError(f"{path}: missing column '{name}'")
        indices[key] = header.index(name)
    conf_idx = header.index(columns["confidence"]) if columns["confidence"] in header else None

    n = len(rows)
    angles = np.empty((n, 3), dtype=np.float64)
    conf = np.ones(n, dtype=np.float64)
    for r, row in enumerate(rows):
        for k, key in enumerate(("pitch", "yaw", "roll")):
            angles[r, k] = _cell_float(row, indices[key], r)
        if conf_idx is not None:
            conf[r] = _cell_float(row, conf_idx, r)

    valid = conf >= confidence_threshold
    if not valid.any():
        raise UnusableStreamError(f"{path}: every row is below confidence {confidence_threshold}")
    for k in range(3):
        angles[:, k] = _interpolate_failed(angles[:, k], valid)

    vid = video_id if video_id is not None else Path(path).stem
    return HeadPoseSeries(frames=angles, fps=fps, video_id=vid)


def parse_au_csv(
    path: str | Path,
    column_map: dict[str, str] | None = None,
    fps: float = DEFAULT_FPS,
    video_id: str | None = None,
) -> AUSeries:
    """Read per-frame AU intensities (17 columns, OpenFace `AUxx_r` names).

    Intensities are clipped to the [0, 5] scale; matching `AUxx_c` visibility
    columns are captured when present.
    """
    header, rows = _read_csv_rows(path)
    if not rows:
        raise TooShortError(f"{path}: no data rows")

    names = {name: (column_map or {}).get(name, f"{name}_r") for name in AU_NAMES}
    missing = [col for col in names.values() if col not in header]
    if missing:
        raise SchemaError(f"{path}: missing AU intensity columns {missing}")
    int_idx = [header.index(names[name]) for name in AU_NAMES]

    pres_cols = [f"{name}_c" for name in AU_NAMES]
    have_presence = all(col in header for col in pres_cols)
    pres_idx = [header.index(col) for col in pres_cols] if have_presence else None

    n = len(rows)
    frames = np.empty((n, N_AUS), dtype=np.float64)
    presence = np.empty((n, N_AUS), dtype=np.float64) if have_presence else None
    for r, row in enumerate(rows):
        for k, c in enumerate(int_idx):
            frames[r, k] = _cell_float(row, c, r)
        if pres_idx is not None:
            for k, c in enumerate(pres_idx):
                presence[r, k] = _cell_float(row, c, r)
    np.clip(frames, 0.0, 5.0, out=frames)

    vid = video_id if video_id is not None else Path(path).stem
    return AUSeries(frames=frames, fps=fps, video_id=vid, presence=presence)


def read_wav(path: str | Path, video_id: str | None = None) -> AudioTrack:
    """Read a RIFF/WAVE PCM-16 file; stereo is downmixed by channel average."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getcomptype() != "NONE":
                raise UnsupportedFormatError(f"{path}: non-PCM encoding '{wf.getcomptype()}'")
            if wf.getsampwidth() != 2:
                raise UnsupportedFormatError(
                    f"{path}: only PCM-16 supported, got {8 * wf.getsampwidth()}-bit"
                )
            n_channels = wf.getnchannels()
            if n_channels not in (1, 2):
                raise UnsupportedFormatError(f"{path}: {n_channels} channels unsupported")
            sr = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise ParseError(f"{path}: truncated file") from exc

    data = np.frombuffer(raw, dtype="<i2")
    if data.size != n_frames * n_channels:
        raise ParseError(f"{path}: truncated file")
    samples = data.astype(np.float64) / 32768.0
    if n_channels == 2:
        samples = 0.5 * (samples[0::2] + samples[1::2])
    vid = video_id if video_id is not None else path.stem
    return AudioTrack(samples=samples, sample_rate=sr, video_id=vid)


def _resample_matrix(frames: np.ndarray, src_fps: float, target_fps: float) -> np.ndarray:
    t_old = np.arange(frames.shape[0]) / src_fps
    n_new = int(math.floor(t_old[-1] * target_fps)) + 1 if frames.shape[0] > 1 else 1
    t_new = np.arange(n_new) / target_fps
    out = np.empty((n_new, frames.shape[1]), dtype=np.float64)
    for k in range(frames.shape[1]):
        out[:, k] = np.interp(t_new, t_old, frames[:, k])
    return out


def resample_pose(series: HeadPoseSeries, target_fps: float = DEFAULT_FPS) -> HeadPoseSeries:
    """Linearly resample to the canonical frame rate; identity when already there."""
    if series.fps == target_fps:
        return series
    frames = _resample_matrix(series.frames, series.fps, target_fps)
    return HeadPoseSeries(frames=frames, fps=target_fps, video_id=series.video_id)


def resample_au(series: AUSeries, target_fps: float = DEFAULT_FPS) -> AUSeries:
    if series.fps == target_fps:
        return series
    frames = _resample_matrix(series.frames, series.fps, target_fps)
    presence = None
    if series.presence is not None:
        # Visibility is categorical: take the nearest source frame.
        t_new = np.arange(frames.shape[0]) / target_fps
        src = np.clip(np.rint(t_new * series.fps).astype(int), 0, len(series) - 1)
        presence = series.presence[src]
    return AUSeries(frames=frames, fps=target_fps, video_id=series.video_id, presence=presence)


def dump_pose_csv(series: HeadPoseSeries, path: str | Path) -> None:
    """Canonical dump: `video_id,frame,pitch,yaw,roll`, repr floats (round-trips exactly)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("video_id,frame,pitch,yaw,roll\n")
        for i, row in enumerate(series.frames):
            p, y, r = (float(v) for v in row)
            fh.write(f"{series.video_id},{i},{p!r},{y!r},{r!r}\n")


def load_pose_dump(path: str | Path, fps: float = DEFAULT_FPS) -> HeadPoseSeries:
    header, rows = _read_csv_rows(path)
    if header != ["video_id", "frame", "pitch", "yaw", "roll"]:
        raise SchemaError(f"{path}: not a canonical pose dump")
    frames = np.array([[float(r[2]), float(r[3]), float(r[4])] for r in rows])
    return HeadPoseSeries(frames=frames, fps=fps, video_id=rows[0][0])


def dump_au_csv(series: AUSeries, path: str | Path) -> None:
    """Canonical dump: `video_id,frame,AU01..AU45`."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("video_id,frame," + ",".join(AU_NAMES) + "\n")
        for i, frame in enumerate(series.frames):
            cells = ",".join(repr(float(v)) for v in frame)
            fh.write(f"{series.video_id},{i},{cells}\n")


def load_au_dump(path: str | Path, fps: float = DEFAULT_FPS) -> AUSeries:
    header, rows = _read_csv_rows(path)
    if header != ["video_id", "frame"] + list(AU_NAMES):
        raise SchemaError(f"{path}: not a canonical AU dump")
    frames = np.array([[float(v) for v in r[2:]] for r in rows])
    return AUSeries(frames=frames, fps=fps, video_id=rows[0][0])
