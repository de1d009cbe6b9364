"""Evaluation harness: labels, thin-slice chunking, metrics, cross-validation.

Scoring happens at two levels. Chunk level treats every thin slice as an
independent sample carrying its source video's label; video level aggregates
a video's chunk predictions first (majority vote for classification, mean for
regression). Fold splits always group by video so chunks of one video never
appear on both sides of a split.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ShapeError
from .speech import NormStats, apply_norm, z_normalize

logger = logging.getLogger(__name__)

OCEAN_TRAITS = ("O", "C", "E", "A", "N")
INTERVIEW_TRAITS = ("Ov", "RH", "Ex", "EC", "Fr")


# --- metric primitives ------------------------------------------------------


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation; NaN when either vector is constant."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.sqrt((ac @ ac) * (bc @ bc))
    if denom == 0.0:
        return float("nan")
    return float(np.clip((ac @ bc) / denom, -1.0, 1.0))


def binary_f1(pred_labels: np.ndarray, true_labels: np.ndarray) -> float:
    """F1 for the positive class (= 1); 0 when no positives exist anywhere."""
    p = np.asarray(pred_labels).astype(int)
    t = np.asarray(true_labels).astype(int)
    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def accuracy(pred_labels: np.ndarray, true_labels: np.ndarray) -> float:
    return float(np.mean(np.asarray(pred_labels).astype(int) == np.asarray(true_labels).astype(int)))


# --- labels and chunking ----------------------------------------------------


@dataclass(frozen=True)
class TraitLabels:
    trait: str
    video_ids: tuple[str, ...]
    scores: np.ndarray  # continuous, in [0, 1]
    labels: np.ndarray  # binary, 1 iff score >= split median


def dichotomize(scores: np.ndarray, train_indices) -> np.ndarray:
    """Binary labels from the training-split median; score == median -> 1."""
    scores = np.asarray(scores, dtype=np.float64)
    train_indices = np.asarray(train_indices, dtype=int)
    if train_indices.shape[0] < 2:
        raise ConfigurationError("need at least two training videos for the median split")
    median = float(np.median(scores[train_indices]))
    return (scores >= median).astype(int)


@dataclass(frozen=True)
class VideoRecord:
    """Aligned per-window features for one full video, plus its trait score."""

    video_id: str
    kineme: np.ndarray  # (n_windows, K) one-hot rows
    au: np.ndarray  # (n_windows, 17) binary
    speech: np.ndarray  # (n_windows, 23), raw (normalized per split)
    score: float

    @property
    def n_windows(self) -> int:
        return self.kineme.shape[0]

    @property
    def duration_s(self) -> int:
        # Inverse of the 2 s / 1 s window arithmetic.
        return self.n_windows + 1


@dataclass(frozen=True)
class ChunkRecord:
    video_id: str
    chunk_id: str
    slice_len_s: int
    window_start: int
    window_count: int
    score: float  # inherited from the source video


@dataclass(frozen=True)
class ChunkSet:
    chunks: tuple[ChunkRecord, ...]
    slice_len_s: int
    hop_s: int

    def __len__(self) -> int:
        return len(self.chunks)


def make_chunks(videos: list[VideoRecord], slice_len_s: int, hop_s: int | None = None) -> ChunkSet:
    """Tile each video with thin slices of `slice_len_s` seconds.

    Under the 2 s / 1 s window plan a slice of S seconds spans S - 1 windows.
    The default hop equals the slice length (non-overlapping tiling). Videos
    shorter than one slice are skipped with a warning.
    """
    if int(slice_len_s) != slice_len_s or slice_len_s < 2:
        raise ConfigurationError("slice_len_s must be an integer >= 2 seconds")
    slice_len_s = int(slice_len_s)
    hop = int(hop_s) if hop_s is not None else slice_len_s
    if hop < 1:
        raise ConfigurationError("chunk hop must be >= 1 second")
    windows_per_chunk = slice_len_s - 1
    chunks = []
    for video in videos:
        if slice_len_s > video.duration_s:
            logger.warning(
                "video %s (%d s) shorter than slice %d s; skipped",
                video.video_id, video.duration_s, slice_len_s,
            )
            continue
        k = 0
        while k * hop + slice_len_s <= video.duration_s:
            chunks.append(
                ChunkRecord(
                    video_id=video.video_id,
                    chunk_id=f"{video.video_id}#c{k}",
                    slice_len_s=slice_len_s,
                    window_start=k * hop,
                    window_count=windows_per_chunk,
                    score=video.score,
                )
            )
            k += 1
    return ChunkSet(chunks=tuple(chunks), slice_len_s=slice_len_s, hop_s=hop)


def chunk_samples(chunk_set: ChunkSet, videos_by_id: dict[str, VideoRecord],
                  targets: dict[str, float], speech_stats: NormStats | None = None):
    """Materialize chunks into AlignedSamples with the given per-video targets."""
    from .fusion import AlignedSample

    samples = []
    for ch in chunk_set.chunks:
        video = videos_by_id[ch.video_id]
        sl = slice(ch.window_start, ch.window_start + ch.window_count)
        speech = video.speech[sl]
        if speech_stats is not None:
            speech = apply_norm(speech, speech_stats)
        samples.append(
            AlignedSample(
                chunk_id=ch.chunk_id,
                kineme=video.kineme[sl],
                au=video.au[sl],
                speech=speech,
                target=float(targets[ch.video_id]),
            )
        )
    return samples


# --- metrics reports --------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    task: str  # 'cls' | 'reg'
    level: str  # 'chunk' | 'video'
    n: int
    acc: float
    f1: float | None = None
    pcc: float | None = None
    mae: float | None = None
    acc_std: float | None = None
    f1_std: float | None = None
    pcc_std: float | None = None
    mae_std: float | None = None
    degenerate: bool = False

    @property
    def primary(self) -> float:
        """The headline metric: PCC for regression, F1 for classification."""
        return self.pcc if self.task == "reg" else self.f1

    @property
    def primary_std(self) -> float | None:
        return self.pcc_std if self.task == "reg" else self.f1_std


def compute_metrics(preds, targets, task: str, level: str = "chunk") -> MetricsReport:
    """Score aligned predictions. Classification thresholds scores at 0.5;
    regression reports PCC, MAE, and Acc = 1 - MAE (exactly).
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.size == 0:
        raise ShapeError(f"preds {preds.shape} vs targets {targets.shape}")
    if task == "cls":
        pred_labels = (preds >= 0.5).astype(int)
        true_labels = targets.astype(int)
        return MetricsReport(
            task="cls", level=level, n=preds.size,
            acc=accuracy(pred_labels, true_labels),
            f1=binary_f1(pred_labels, true_labels),
        )
    if task == "reg":
        r = pearson(preds, targets)
        degenerate = bool(np.isnan(r))
        if degenerate:
            r = 0.0
        mae_value = float(np.mean(np.abs(preds - targets)))
        return MetricsReport(
            task="reg", level=level, n=preds.size,
            acc=1.0 - mae_value, pcc=r, mae=mae_value, degenerate=degenerate,
        )
    raise ConfigurationError(f"task must be 'cls' or 'reg', got {task!r}")


def aggregate_video(chunk_preds, task: str) -> float:
    """Collapse one video's chunk predictions: majority label (ties -> 1) for
    classification, arithmetic mean for regression."""
    preds = np.asarray(chunk_preds, dtype=np.float64)
    if preds.size == 0:
        raise ShapeError("no chunk predictions to aggregate")
    if task == "cls":
        votes = (preds >= 0.5).astype(int)
        ones = int(votes.sum())
        return 1.0 if ones * 2 >= votes.size else 0.0
    return float(preds.mean())


def _aggregate_reports(reports: list[MetricsReport], task: str, level: str) -> MetricsReport:
    n_total = int(sum(r.n for r in reports))
    if task == "cls":
        accs = np.array([r.acc for r in reports])
        f1s = np.array([r.f1 for r in reports])
        return MetricsReport(
            task=task, level=level, n=n_total,
            acc=float(accs.mean()), f1=float(f1s.mean()),
            acc_std=float(accs.std()), f1_std=float(f1s.std()),
        )
    pccs = np.array([r.pcc for r in reports])
    maes = np.array([r.mae for r in reports])
    mae_mean = float(maes.mean())
    return MetricsReport(
        task=task, level=level, n=n_total,
        acc=1.0 - mae_mean, pcc=float(pccs.mean()), mae=mae_mean,
        acc_std=float(maes.std()), pcc_std=float(pccs.std()), mae_std=float(maes.std()),
        degenerate=any(r.degenerate for r in reports),
    )


# --- cross-validation -------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """What to train and how to evaluate it."""

    arch: str
    task: str  # 'cls' | 'reg'
    slice_len_s: int
    trait: str = ""
    chunk_hop_s: int | None = None
    hidden_dim: int = 32
    lr: float = 0.01
    max_epochs: int = 100
    patience: int = 4
    batch_size: int = 32
    val_fraction: float = 0.15


@dataclass(frozen=True)
class SplitPredictions:
    chunk_preds: np.ndarray
    chunk_targets: np.ndarray
    video_preds: np.ndarray
    video_targets: np.ndarray
    video_ids: tuple[str, ...]
    traces: tuple  # AttentionTraces when the arch produces them, else empty


@dataclass(frozen=True)
class CrossValidationResult:
    spec: ModelSpec
    folds: int
    repeats: int
    chunk: MetricsReport
    video: MetricsReport


def run_split(
    videos: list[VideoRecord],
    fit_idx: np.ndarray,
    val_idx: np.ndarray,
    test_idx: np.ndarray,
    spec: ModelSpec,
    seed: int,
) -> SplitPredictions:
    """Train on `fit`, early-stop on `val`, predict every `test` chunk.

    The dichotomization median and the speech normalization statistics are
    computed on the training side (fit + val) only.
    """
    from .fusion import ARCH_MODALITIES, build_model, model_input
    from .neural import TrainConfig, train

    scores = np.array([v.score for v in videos])
    train_side = np.concatenate([fit_idx, val_idx])
    trait_labels = TraitLabels(
        trait=spec.trait,
        video_ids=tuple(v.video_id for v in videos),
        scores=scores,
        labels=dichotomize(scores, train_side),
    )
    if spec.task == "cls":
        targets = {vid: float(lab)
                   for vid, lab in zip(trait_labels.video_ids, trait_labels.labels)}
    else:
        targets = {vid: float(s)
                   for vid, s in zip(trait_labels.video_ids, trait_labels.scores)}

    train_speech = np.concatenate([videos[i].speech for i in train_side], axis=0)
    _, stats = z_normalize(train_speech)

    by_id = {v.video_id: v for v in videos}
    hop = spec.chunk_hop_s
    fit_chunks = make_chunks([videos[i] for i in fit_idx], spec.slice_len_s, hop)
    val_chunks = make_chunks([videos[i] for i in val_idx], spec.slice_len_s, hop)
    test_chunks = make_chunks([videos[i] for i in test_idx], spec.slice_len_s, hop)

    fit_samples = chunk_samples(fit_chunks, by_id, targets, stats)
    val_samples = chunk_samples(val_chunks, by_id, targets, stats)
    test_samples = chunk_samples(test_chunks, by_id, targets, stats)

    input_dims = {
        "kin": videos[0].kineme.shape[1],
        "au": videos[0].au.shape[1],
        "aud": videos[0].speech.shape[1],
    }
    modalities = ARCH_MODALITIES[spec.arch]
    model = build_model(spec.arch, input_dims, spec.hidden_dim, spec.task, seed=seed)
    config = TrainConfig(
        lr=spec.lr,
        loss="bce" if spec.task == "cls" else "mae",
        max_epochs=spec.max_epochs,
        patience=spec.patience,
        batch_size=spec.batch_size,
        seed=seed,
    )
    train_pairs = [(model_input(s, modalities), s.target) for s in fit_samples]
    val_pairs = [(model_input(s, modalities), s.target) for s in val_samples]
    train(model, train_pairs, val_pairs, config)

    traces = []
    chunk_preds = np.empty(len(test_samples))
    for i, sample in enumerate(test_samples):
        if spec.arch == "af-tri":
            pred, weights = model.forward_with_trace(model_input(sample, modalities))
            from .fusion import AttentionTrace

            traces.append(AttentionTrace(chunk_id=sample.chunk_id, weights=weights))
        else:
            pred = model.forward(model_input(sample, modalities))
        chunk_preds[i] = pred
    chunk_targets = np.array([s.target for s in test_samples])

    video_order = [videos[i].video_id for i in test_idx
                   if any(c.video_id == videos[i].video_id for c in test_chunks.chunks)]
    video_preds = []
    video_targets = []
    for vid in video_order:
        vp = [chunk_preds[i] for i, c in enumerate(test_chunks.chunks) if c.video_id == vid]
        video_preds.append(aggregate_video(vp, spec.task))
        video_targets.append(targets[vid])
    return SplitPredictions(
        chunk_preds=chunk_preds,
        chunk_targets=chunk_targets,
        video_preds=np.array(video_preds),
        video_targets=np.array(video_targets),
        video_ids=tuple(video_order),
        traces=tuple(traces),
    )


def cross_validate(
    videos: list[VideoRecord],
    spec: ModelSpec,
    folds: int = 10,
    repeats: int = 5,
    seed: int = 0,
) -> CrossValidationResult:
    """Repeated k-fold CV grouped by video; reports mean +- std over all runs."""
    if folds > len(videos):
        raise ConfigurationError(f"{folds} folds but only {len(videos)} videos")
    videos = sorted(videos, key=lambda v: v.video_id)
    chunk_reports = []
    video_reports = []
    for rep in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([seed, rep]))
        perm = rng.permutation(len(videos))
        fold_slices = np.array_split(perm, folds)
        for fold_i in range(folds):
            test_idx = fold_slices[fold_i]
            rest = np.concatenate([fold_slices[j] for j in range(folds) if j != fold_i])
            n_val = max(1, int(round(spec.val_fraction * rest.shape[0])))
            val_idx = rest[-n_val:]
            fit_idx = rest[:-n_val]
            split_seed = int(np.random.SeedSequence([seed, rep, fold_i]).generate_state(1)[0])
            pred = run_split(videos, fit_idx, val_idx, test_idx, spec, split_seed)
            chunk_reports.append(
                compute_metrics(pred.chunk_preds, pred.chunk_targets, spec.task, "chunk")
            )
            video_reports.append(
                compute_metrics(pred.video_preds, pred.video_targets, spec.task, "video")
            )
    return CrossValidationResult(
        spec=spec,
        folds=folds,
        repeats=repeats,
        chunk=_aggregate_reports(chunk_reports, spec.task, "chunk"),
        video=_aggregate_reports(video_reports, spec.task, "video"),
    )


# --- thin-slice sweeps ------------------------------------------------------


REPORT_COLUMNS = ("trait", "arch", "slice_s", "level", "acc", "f1", "pcc", "mae", "n", "std")


def report_rows(result: CrossValidationResult) -> list[dict]:
    rows = []
    for report in (result.chunk, result.video):
        rows.append(
            {
                "trait": result.spec.trait,
                "arch": result.spec.arch,
                "slice_s": result.spec.slice_len_s,
                "level": report.level,
                "acc": report.acc,
                "f1": "" if report.f1 is None else report.f1,
                "pcc": "" if report.pcc is None else report.pcc,
                "mae": "" if report.mae is None else report.mae,
                "n": report.n,
                "std": "" if report.primary_std is None else report.primary_std,
            }
        )
    return rows


def write_report_csv(rows: list[dict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in REPORT_COLUMNS) + "\n")


def sweep_slices(
    videos: list[VideoRecord],
    spec: ModelSpec,
    slice_lengths: list[int],
    folds: int = 10,
    repeats: int = 1,
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> list[CrossValidationResult]:
    """Full train/eval per slice length; optionally emits report.csv + curves.svg."""
    if any(s < 2 for s in slice_lengths):
        raise ConfigurationError("every slice must be at least 2 s")
    results = []
    for s in slice_lengths:
        run_spec = dataclasses.replace(spec, slice_len_s=int(s))
        results.append(cross_validate(videos, run_spec, folds=folds, repeats=repeats, seed=seed))

    if out_dir is not None:
        from .svg import line_plot

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = [row for res in results for row in report_rows(res)]
        write_report_csv(rows, out_dir / "report.csv")
        xs = [float(r.spec.slice_len_s) for r in results]
        metric = "pcc" if spec.task == "reg" else "f1"
        curves = {
            f"chunk {metric}": (xs, [r.chunk.primary for r in results]),
            f"video {metric}": (xs, [r.video.primary for r in results]),
        }
        svg = line_plot(curves, title=f"{spec.arch} {spec.trait}".strip(),
                        x_label="slice length (s)", y_label=metric.upper())
        (out_dir / "curves.svg").write_text(svg, encoding="utf-8")
    return results
