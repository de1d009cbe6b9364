"""End-to-end plumbing: raw corpus files -> aligned per-video window features.

A corpus directory holds `pose/<id>.csv`, `au/<id>.csv`, `audio/<id>.wav`, and
`labels.csv` (columns video_id,trait,score). All three channels are windowed
with the same 2 s / 1 s plan on their own timelines and truncated to the
shortest channel so the per-window rows align.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .evaluation import VideoRecord
from .facial import compute_au_thresholds, encode_au_windows
from .ingest import (
    DEFAULT_FPS,
    parse_au_csv,
    parse_pose_csv,
    plan_windows,
    read_wav,
    resample_au,
    resample_pose,
)
from .kineme import KinemeCodebook, decode_kinemes
from .speech import aggregate_speech, compute_llds


@dataclass(frozen=True)
class RawVideo:
    video_id: str
    pose_path: Path
    au_path: Path
    wav_path: Path


def list_corpus(corpus_dir: str | Path) -> list[RawVideo]:
    corpus_dir = Path(corpus_dir)
    pose_dir = corpus_dir / "pose"
    if not pose_dir.is_dir():
        raise SchemaError(f"{corpus_dir}: missing pose/ subdirectory")
    videos = []
    for pose_path in sorted(pose_dir.glob("*.csv")):
        vid = pose_path.stem
        au_path = corpus_dir / "au" / f"{vid}.csv"
        wav_path = corpus_dir / "audio" / f"{vid}.wav"
        if not au_path.exists() or not wav_path.exists():
            raise SchemaError(f"{corpus_dir}: incomplete channels for video {vid}")
        videos.append(RawVideo(video_id=vid, pose_path=pose_path, au_path=au_path,
                               wav_path=wav_path))
    if not videos:
        raise SchemaError(f"{corpus_dir}: no pose CSVs found")
    return videos


def load_labels(path: str | Path) -> dict[str, dict[str, float]]:
    """labels.csv -> {trait: {video_id: score}}."""
    out: dict[str, dict[str, float]] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["video_id", "trait", "score"]:
            raise SchemaError(f"{path}: expected header video_id,trait,score")
        for row in reader:
            if not row:
                continue
            vid, trait, score = row[0].strip(), row[1].strip(), float(row[2])
            out.setdefault(trait, {})[vid] = score
    return out


def encode_video_features(
    pose, au, track, codebook: KinemeCodebook
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-window (kineme one-hot, AU bits, raw speech) for one video.

    Channels are truncated to the shortest window count so rows align.
    """
    pose = resample_pose(pose, codebook.fps)
    au = resample_au(au, codebook.fps)
    pose_plan = plan_windows(len(pose), pose.fps)
    au_plan = plan_windows(len(au), au.fps)
    audio_plan = plan_windows(len(track), track.sample_rate)

    kin = decode_kinemes(pose, codebook, pose_plan).one_hot
    au_bits = encode_au_windows(au, au_plan, compute_au_thresholds(au)).vectors
    speech = aggregate_speech(compute_llds(track), audio_plan)

    n = min(kin.shape[0], au_bits.shape[0], speech.shape[0])
    return kin[:n], au_bits[:n], speech[:n]


def load_pose_corpus_dir(pose_dir: str | Path, fps: float = DEFAULT_FPS):
    """Pose series from a directory of CSVs (or a corpus root with pose/),
    resampled to the canonical rate."""
    pose_dir = Path(pose_dir)
    if (pose_dir / "pose").is_dir():
        pose_dir = pose_dir / "pose"
    paths = sorted(pose_dir.glob("*.csv"))
    if not paths:
        raise SchemaError(f"{pose_dir}: no pose CSVs found")
    return [resample_pose(parse_pose_csv(p, fps=fps, video_id=p.stem)) for p in paths]


def encode_corpus(
    corpus_dir: str | Path,
    codebook: KinemeCodebook,
    trait: str,
    fps: float = DEFAULT_FPS,
) -> list[VideoRecord]:
    """Full-corpus encoding into evaluation-ready VideoRecords."""
    corpus_dir = Path(corpus_dir)
    labels = load_labels(corpus_dir / "labels.csv")
    if trait not in labels:
        raise SchemaError(f"trait {trait!r} not in labels; have {sorted(labels)}")
    scores = labels[trait]
    records = []
    for rv in list_corpus(corpus_dir):
        if rv.video_id not in scores:
            raise SchemaError(f"no {trait} score for video {rv.video_id}")
        pose = parse_pose_csv(rv.pose_path, fps=fps, video_id=rv.video_id)
        au = parse_au_csv(rv.au_path, fps=fps, video_id=rv.video_id)
        track = read_wav(rv.wav_path, video_id=rv.video_id)
        kin, au_bits, speech = encode_video_features(pose, au, track, codebook)
        records.append(
            VideoRecord(
                video_id=rv.video_id,
                kineme=kin,
                au=au_bits,
                speech=speech,
                score=scores[rv.video_id],
            )
        )
    return records
