"""Synthetic corpora with planted, recoverable structure.

Head motion is built from a bank of sinusoidal pose templates with distinct
integer frequencies per channel: distinct frequencies make the bank mutually
near-orthogonal (recovery is well-posed) and integer frequencies make every
template 1 s-periodic, so any window aligned to a whole second inside a run is
exactly the template. Videos are tiled with runs of 2 s blocks; AU activity
follows a per-video activation rate; audio is a fixed-frequency tone whose
amplitude varies per video against a constant noise floor.

The trait score is a declared deterministic rule over three per-video drivers
(realized template-0 block fraction, realized AU activation rate, tone
amplitude level), mixed by configurable weights.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .ingest import AU_NAMES, N_AUS
from .oracles import OracleReport, oracle_suite  # noqa: F401  (suite is part of this surface)

TONE_HZ = 220.0
SIGNAL_AUS = tuple(range(6))  # indices into the 17-AU set that carry schedule signal
BLOCK_S = 2


@dataclass(frozen=True)
class SynthConfig:
    n_videos: int = 60
    video_len_s: int = 15
    fps: int = 30
    sample_rate: int = 16000
    n_templates: int = 4
    template_amplitude: float = 0.2
    trait: str = "E"
    # Weights of the three drivers in the trait rule (need not be normalized).
    weight_kineme: float = 0.5
    weight_au: float = 0.0
    weight_speech: float = 0.5
    angle_noise_sd: float = 0.0
    au_jitter_sd: float = 0.1
    audio_noise_sd: float = 0.01
    run_len_blocks: tuple[int, int] = (2, 4)  # inclusive range
    seed: int = 0

    def __post_init__(self):
        if self.n_templates < 2:
            raise ConfigurationError("need at least two planted templates")
        total = self.weight_kineme + self.weight_au + self.weight_speech
        if total <= 0:
            raise ConfigurationError("trait rule weights must not all be zero")


@dataclass(frozen=True)
class CorpusPaths:
    root: Path
    labels: Path
    manifest: Path


def template_frequencies(config: SynthConfig) -> np.ndarray:
    """Integer Hz per (template, channel); distinct across templates per channel."""
    k = config.n_templates
    freqs = np.empty((k, 3), dtype=int)
    for t in range(k):
        freqs[t] = (1 + t, 1 + (t + 1) % k, 1 + (t + 2) % k)
    return freqs


def planted_template_angles(config: SynthConfig, template: int) -> np.ndarray:
    """One clean 2 s block of the template as a (2*fps, 3) angle matrix."""
    freqs = template_frequencies(config)[template]
    t_sec = np.arange(BLOCK_S * config.fps) / config.fps
    return np.stack(
        [config.template_amplitude * np.sin(2.0 * np.pi * f * t_sec) for f in freqs], axis=1
    )


def _video_rng(config: SynthConfig, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([config.seed, index]))


def _plant_blocks(config: SynthConfig, rng: np.random.Generator, n_blocks: int,
                  ) -> tuple[np.ndarray, float]:
    """Run-structured template ids per block, plus the realized template-0 rate."""
    p0 = 0.1 + 0.8 * rng.uniform()
    lo, hi = config.run_len_blocks
    ids = []
    while len(ids) < n_blocks:
        if rng.uniform() < p0:
            template = 0
        else:
            template = int(rng.integers(1, config.n_templates))
        run = int(rng.integers(lo, hi + 1))
        ids.extend([template] * run)
    ids = np.array(ids[:n_blocks], dtype=int)
    return ids, float(np.mean(ids == 0))


def _pose_frames(config: SynthConfig, rng: np.random.Generator, block_ids: np.ndarray
                 ) -> np.ndarray:
    freqs = template_frequencies(config)
    n_frames = config.video_len_s * config.fps
    frames_per_block = BLOCK_S * config.fps
    t_sec = np.arange(n_frames) / config.fps
    block_of = np.minimum(np.arange(n_frames) // frames_per_block, len(block_ids) - 1)
    angles = np.empty((n_frames, 3))
    for ch in range(3):
        f = freqs[block_ids[block_of], ch]
        angles[:, ch] = config.template_amplitude * np.sin(2.0 * np.pi * f * t_sec)
    if config.angle_noise_sd > 0:
        angles += rng.normal(0.0, config.angle_noise_sd, size=angles.shape)
    return np.clip(angles, -np.pi, np.pi)


def _au_frames(config: SynthConfig, rng: np.random.Generator, n_blocks: int
               ) -> tuple[np.ndarray, np.ndarray, float]:
    """Block-scheduled AU intensities; returns (frames, active blocks, realized rate)."""
    rate = 0.1 + 0.8 * rng.uniform()
    n_active = int(np.clip(round(rate * n_blocks), 0, n_blocks - 1))
    active = np.sort(rng.choice(n_blocks, size=n_active, replace=False)) if n_active else np.array([], dtype=int)
    realized = n_active / n_blocks

    n_frames = config.video_len_s * config.fps
    frames_per_block = BLOCK_S * config.fps
    block_of = np.minimum(np.arange(n_frames) // frames_per_block, n_blocks - 1)
    is_active = np.isin(block_of, active)
    frames = np.full((n_frames, N_AUS), 0.3)
    for a in SIGNAL_AUS:
        frames[:, a] = np.where(is_active, 3.0, 0.5)
    frames += rng.normal(0.0, config.au_jitter_sd, size=frames.shape)
    return np.clip(frames, 0.0, 5.0), active, realized


def _audio_samples(config: SynthConfig, rng: np.random.Generator, amp: float) -> np.ndarray:
    n = config.video_len_s * config.sample_rate
    t = np.arange(n) / config.sample_rate
    x = amp * np.sin(2.0 * np.pi * TONE_HZ * t)
    if config.audio_noise_sd > 0:
        x = x + rng.normal(0.0, config.audio_noise_sd, size=n)
    return np.clip(x, -1.0, 1.0)


def _write_pose_csv(path: Path, angles: np.ndarray) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("frame,confidence,pose_Rx,pose_Ry,pose_Rz\n")
        for i, row in enumerate(angles):
            p, y, r = (float(v) for v in row)
            fh.write(f"{i},1.0,{p!r},{y!r},{r!r}\n")


def _write_au_csv(path: Path, frames: np.ndarray) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("frame," + ",".join(f"{n}_r" for n in AU_NAMES) + "\n")
        for i, row in enumerate(frames):
            fh.write(f"{i}," + ",".join(repr(float(v)) for v in row) + "\n")


def _write_wav(path: Path, samples: np.ndarray, sample_rate: int) -> None:
    pcm = np.clip(np.rint(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def generate_corpus(config: SynthConfig, out_dir: str | Path) -> CorpusPaths:
    """Emit pose/AU/WAV files, labels.csv, and a ground-truth manifest.

    Byte-identical for a fixed config (per-video RNG streams are derived from
    (seed, video index)).
    """
    out = Path(out_dir)
    for sub in ("pose", "au", "audio"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    # Decodable blocks: full non-overlapping 2 s windows.
    n_blocks = (config.video_len_s * config.fps) // (BLOCK_S * config.fps)
    weight_total = config.weight_kineme + config.weight_au + config.weight_speech

    manifest_videos = []
    label_rows = []
    for v in range(config.n_videos):
        vid = f"v{v:03d}"
        rng = _video_rng(config, v)
        block_ids, d_kin = _plant_blocks(config, rng, n_blocks)
        angles = _pose_frames(config, rng, block_ids)
        au_frames, active_blocks, d_au = _au_frames(config, rng, n_blocks)
        d_speech = rng.uniform()
        amp = 0.1 + 0.8 * d_speech
        audio = _audio_samples(config, rng, amp)

        score = (
            config.weight_kineme * d_kin
            + config.weight_au * d_au
            + config.weight_speech * d_speech
        ) / weight_total

        _write_pose_csv(out / "pose" / f"{vid}.csv", angles)
        _write_au_csv(out / "au" / f"{vid}.csv", au_frames)
        _write_wav(out / "audio" / f"{vid}.wav", audio, config.sample_rate)
        label_rows.append((vid, config.trait, score))
        manifest_videos.append(
            {
                "video_id": vid,
                "block_ids": block_ids.tolist(),
                "active_au_blocks": active_blocks.tolist(),
                "driver_kineme": d_kin,
                "driver_au": d_au,
                "driver_speech": d_speech,
                "tone_amplitude": amp,
                "score": score,
            }
        )

    labels_path = out / "labels.csv"
    with labels_path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("video_id,trait,score\n")
        for vid, trait, score in label_rows:
            fh.write(f"{vid},{trait},{score!r}\n")

    manifest_path = out / "manifest.json"
    manifest = {
        "format": "kineme-synth-manifest/1",
        "config": {
            "n_videos": config.n_videos,
            "video_len_s": config.video_len_s,
            "fps": config.fps,
            "sample_rate": config.sample_rate,
            "n_templates": config.n_templates,
            "template_amplitude": config.template_amplitude,
            "trait": config.trait,
            "weights": [config.weight_kineme, config.weight_au, config.weight_speech],
            "angle_noise_sd": config.angle_noise_sd,
            "au_jitter_sd": config.au_jitter_sd,
            "audio_noise_sd": config.audio_noise_sd,
            "run_len_blocks": list(config.run_len_blocks),
            "seed": config.seed,
        },
        "block_len_s": BLOCK_S,
        "signal_aus": list(SIGNAL_AUS),
        "videos": manifest_videos,
    }
    manifest_path.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return CorpusPaths(root=out, labels=labels_path, manifest=manifest_path)


def load_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def config_from_toml(path: str | Path) -> SynthConfig:
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:  # pragma: no cover - environment-dependent
        import tomli as tomllib

    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    kwargs = dict(doc.get("synth", doc))
    if "run_len_blocks" in kwargs:
        kwargs["run_len_blocks"] = tuple(kwargs["run_len_blocks"])
    return SynthConfig(**kwargs)
