"""Behavioral explanation reports.

Two artifacts: (1) most-frequent kinemes and dominant AUs inside the top and
bottom score-percentile video bands of a trait, and (2) mean per-modality
attention weights (with run-to-run standard error) from attention-fusion
traces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, ShapeError
from .facial import AUWindowSequence
from .fusion import AttentionTrace
from .ingest import AU_CODES
from .kineme import KinemeSequence

N_TOP_KINEMES = 4
N_TOP_AUS = 5


@dataclass(frozen=True)
class ExplanationReport:
    trait: str
    band: str  # 'high' | 'low'
    top_kinemes: tuple[tuple[int, int], ...]  # (kineme id, window count), sorted desc
    top_aus: tuple[tuple[int, int], ...]  # (AU code, window count), sorted desc
    n_videos: int


@dataclass(frozen=True)
class AttentionSummary:
    trait: str
    mean_weights: np.ndarray  # (3,) order kin, au, aud; sums to 1
    std_error: np.ndarray  # (3,) standard error over runs
    runs: int


def percentile_bands(scores: dict[str, float], pct: float = 10.0) -> tuple[set[str], set[str]]:
    """Video ids in the top and bottom `pct` percent by score.

    Nearest-rank: each band holds the ceil(pct/100 * n) extreme videos; ties at
    the cut score are all included, so a band may exceed pct percent.
    """
    n = len(scores)
    if n * pct / 100.0 < 1.0:
        raise InsufficientDataError(f"{n} videos is too few for a {pct}% band")
    k = math.ceil(pct / 100.0 * n)
    values = np.array(list(scores.values()))
    order = np.sort(values)
    low_cut = order[k - 1]
    high_cut = order[n - k]
    high = {vid for vid, s in scores.items() if s >= high_cut}
    low = {vid for vid, s in scores.items() if s <= low_cut}
    return high, low


def dominant_symbols(
    band_videos: set[str],
    trait: str,
    band: str,
    kineme_seqs: dict[str, KinemeSequence],
    au_seqs: dict[str, AUWindowSequence],
) -> ExplanationReport:
    """Window-count frequencies of kinemes and active AUs over a video band.

    Kineme frequency counts windows decoding to that id; AU frequency counts
    windows where the AU bit is 1. Ties rank the lower id first.
    """
    missing = [v for v in band_videos if v not in kineme_seqs or v not in au_seqs]
    if missing:
        raise ShapeError(f"band videos without sequences: {sorted(missing)}")
    k = next(iter(kineme_seqs.values())).one_hot.shape[1]
    kin_counts = np.zeros(k, dtype=int)
    au_counts = np.zeros(len(AU_CODES), dtype=int)
    for vid in sorted(band_videos):
        kin_counts += kineme_seqs[vid].one_hot.sum(axis=0).astype(int)
        au_counts += au_seqs[vid].vectors.sum(axis=0).astype(int)

    kin_order = np.lexsort((np.arange(k), -kin_counts))[:N_TOP_KINEMES]
    au_order = np.lexsort((np.arange(len(AU_CODES)), -au_counts))[:N_TOP_AUS]
    return ExplanationReport(
        trait=trait,
        band=band,
        top_kinemes=tuple((int(i), int(kin_counts[i])) for i in kin_order),
        top_aus=tuple((AU_CODES[i], int(au_counts[i])) for i in au_order),
        n_videos=len(band_videos),
    )


def attention_summary(
    runs: list[list[AttentionTrace]], trait: str = "", grouping: str = "per-chunk"
) -> AttentionSummary:
    """Mean modality weights across runs of attention traces.

    Within a run, each trace is averaged over its windows, the items are
    averaged, and the mean plus standard error (sample std / sqrt(runs)) is
    taken across runs. `grouping` is metadata only: traces should already be
    per-video or per-chunk items.
    """
    if not runs or any(not run for run in runs):
        raise InsufficientDataError("need at least one run with at least one trace")
    per_run = np.stack([
        np.mean([trace.aggregate for trace in run], axis=0) for run in runs
    ])  # (runs, 3)
    mean = per_run.mean(axis=0)
    n_runs = per_run.shape[0]
    if n_runs > 1:
        err = per_run.std(axis=0, ddof=1) / np.sqrt(n_runs)
    else:
        err = np.zeros(3)
    return AttentionSummary(trait=trait, mean_weights=mean, std_error=err, runs=n_runs)


# --- serialization ----------------------------------------------------------


def explanation_to_dict(report: ExplanationReport) -> dict:
    return {
        "trait": report.trait,
        "band": report.band,
        "top_kinemes": [{"id": i, "count": c} for i, c in report.top_kinemes],
        "top_aus": [{"au": f"AU{code:02d}", "count": c} for code, c in report.top_aus],
        "n_videos": report.n_videos,
    }


def write_explanation_json(reports: list[ExplanationReport], path: str | Path) -> None:
    doc = [explanation_to_dict(r) for r in reports]
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def write_explanation_svg(reports: list[ExplanationReport], path: str | Path) -> None:
    from .svg import grouped_bars

    groups = []
    kin_series: list[float] = []
    au_series: list[float] = []
    for r in reports:
        for i, c in r.top_kinemes:
            groups.append(f"{r.band}:K{i}")
            kin_series.append(float(c))
            au_series.append(0.0)
        for code, c in r.top_aus:
            groups.append(f"{r.band}:AU{code:02d}")
            kin_series.append(0.0)
            au_series.append(float(c))
    svg = grouped_bars(
        groups,
        {"kineme windows": kin_series, "AU windows": au_series},
        title=f"dominant symbols: {reports[0].trait}" if reports else "dominant symbols",
        y_label="window count",
    )
    Path(path).write_text(svg, encoding="utf-8")


def write_attention_summary_csv(summaries: list[AttentionSummary], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("trait,w_kin,w_au,w_speech,se_kin,se_au,se_speech,runs\n")
        for s in summaries:
            w = [float(v) for v in s.mean_weights]
            e = [float(v) for v in s.std_error]
            fh.write(
                f"{s.trait},{w[0]!r},{w[1]!r},{w[2]!r},{e[0]!r},{e[1]!r},{e[2]!r},{s.runs}\n"
            )


def write_attention_summary_svg(summaries: list[AttentionSummary], path: str | Path) -> None:
    from .svg import grouped_bars

    groups = [s.trait or f"run{i}" for i, s in enumerate(summaries)]
    series = {
        "kineme": [float(s.mean_weights[0]) for s in summaries],
        "AU": [float(s.mean_weights[1]) for s in summaries],
        "speech": [float(s.mean_weights[2]) for s in summaries],
    }
    errors = {
        "kineme": [float(s.std_error[0]) for s in summaries],
        "AU": [float(s.std_error[1]) for s in summaries],
        "speech": [float(s.std_error[2]) for s in summaries],
    }
    svg = grouped_bars(groups, series, errors=errors,
                       title="mean modality attention weights", y_label="weight")
    Path(path).write_text(svg, encoding="utf-8")
