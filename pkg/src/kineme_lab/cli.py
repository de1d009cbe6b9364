"""kineme-lab command line interface.

Subcommands cover the full pipeline: ingest raw files, learn a kineme
codebook, encode channels, train predictors, fuse decisions, evaluate with
thin-slice sweeps, and emit explanation reports. Run `kineme-lab <cmd> -h`
for per-command options.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, explain, fusion, pipeline, synth
from .errors import KinemeLabError
from .facial import (
    AUWindowSequence,
    compute_au_thresholds,
    corpus_au_thresholds,
    encode_au_windows,
)
from .ingest import (
    DEFAULT_FPS,
    dump_au_csv,
    dump_pose_csv,
    parse_au_csv,
    parse_pose_csv,
    plan_windows,
    read_wav,
    resample_au,
    resample_pose,
)
from .kineme import (
    KinemeSequence,
    decode_kinemes,
    learn_codebook,
    load_codebook,
    save_codebook,
)
from .oracles import oracle_suite
from .speech import (
    LLD_NAMES,
    SpeechWindowSequence,
    aggregate_speech,
    compute_llds,
    z_normalize,
)


def _cmd_ingest(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.pose:
        series = resample_pose(parse_pose_csv(args.pose, fps=args.fps), DEFAULT_FPS)
        dump_pose_csv(series, out / f"{series.video_id}_pose.csv")
        print(f"pose: {len(series)} frames -> {out / (series.video_id + '_pose.csv')}")
    if args.au:
        series = resample_au(parse_au_csv(args.au, fps=args.fps), DEFAULT_FPS)
        dump_au_csv(series, out / f"{series.video_id}_au.csv")
        print(f"au: {len(series)} frames -> {out / (series.video_id + '_au.csv')}")
    if args.wav:
        track = read_wav(args.wav)
        print(f"audio: {len(track)} samples at {track.sample_rate} Hz"
              f" ({track.duration_s:.2f} s)")
    return 0


def _cmd_learn_codebook(args) -> int:
    series = pipeline.load_pose_corpus_dir(args.pose_dir, fps=args.fps)
    codebook = learn_codebook(series, k=args.k, rank=args.rank, seed=args.seed)
    save_codebook(codebook, args.out)
    print(f"codebook: K={codebook.k} rank={codebook.nmf.rank} "
          f"seg_len={codebook.seg_len} -> {args.out}")
    if args.templates_out:
        _write_templates(codebook, Path(args.templates_out))
    return 0


def _write_templates(codebook, out_dir: Path) -> None:
    from .svg import line_plot

    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "templates.csv").open("w", encoding="utf-8") as fh:
        fh.write("kineme,frame,pitch,yaw,roll\n")
        for k in range(codebook.k):
            angles = codebook.template_angles(k)
            for i, row in enumerate(angles):
                p, y, r = (float(v) for v in row)
                fh.write(f"{k},{i},{p!r},{y!r},{r!r}\n")
    for k in range(codebook.k):
        angles = codebook.template_angles(k)
        xs = list(range(angles.shape[0]))
        svg = line_plot(
            {
                "pitch": (xs, angles[:, 0].tolist()),
                "yaw": (xs, angles[:, 1].tolist()),
                "roll": (xs, angles[:, 2].tolist()),
            },
            title=f"kineme {k}", x_label="frame", y_label="radians",
        )
        (out_dir / f"template_{k:02d}.svg").write_text(svg, encoding="utf-8")
    print(f"templates -> {out_dir}")


def _cmd_encode(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.pose:
        if not args.codebook:
            print("encode --pose requires --codebook", file=sys.stderr)
            return 2
        codebook = load_codebook(args.codebook)
        series = resample_pose(parse_pose_csv(args.pose, fps=args.fps), codebook.fps)
        seq = decode_kinemes(series, codebook)
        _write_kineme_csv([seq], out)
    elif args.au:
        series = resample_au(parse_au_csv(args.au, fps=args.fps), DEFAULT_FPS)
        plan = plan_windows(len(series), series.fps)
        seq = encode_au_windows(series, plan, compute_au_thresholds(series))
        _write_au_bits_csv([seq], out)
    elif args.au_dir:
        all_series = [
            resample_au(parse_au_csv(p, fps=args.fps, video_id=p.stem), DEFAULT_FPS)
            for p in sorted(Path(args.au_dir).glob("*.csv"))
        ]
        shared = corpus_au_thresholds(all_series) if args.threshold_scope == "corpus" else None
        seqs = []
        for series in all_series:
            plan = plan_windows(len(series), series.fps)
            thresholds = shared if shared is not None else compute_au_thresholds(series)
            seqs.append(encode_au_windows(series, plan, thresholds))
        _write_au_bits_csv(seqs, out)
    elif args.wav:
        track = read_wav(args.wav)
        plan = plan_windows(len(track), track.sample_rate)
        vectors = aggregate_speech(compute_llds(track), plan)
        normalized, stats = z_normalize(vectors)
        seq = SpeechWindowSequence(video_id=track.video_id, vectors=normalized,
                                   norm_stats=stats)
        with out.open("w", encoding="utf-8") as fh:
            fh.write("video_id,window," + ",".join(LLD_NAMES) + "\n")
            for w, row in enumerate(seq.vectors):
                fh.write(f"{seq.video_id},{w}," + ",".join(repr(float(v)) for v in row) + "\n")
        norm_path = out.parent / "speech_norm.json"
        norm_path.write_text(
            json.dumps({"mean": seq.norm_stats.mean.tolist(),
                        "std": seq.norm_stats.std.tolist()}, indent=1),
            encoding="utf-8",
        )
    else:
        print("encode needs one of --pose/--au/--au-dir/--wav", file=sys.stderr)
        return 2
    print(f"encoded -> {out}")
    return 0


def _write_kineme_csv(seqs: list[KinemeSequence], path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write("video_id,window,kineme_id\n")
        for seq in seqs:
            for w, kid in enumerate(seq.ids):
                fh.write(f"{seq.video_id},{w},{int(kid)}\n")


def _write_au_bits_csv(seqs: list[AUWindowSequence], path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write("video_id,window,au_bits\n")
        for seq in seqs:
            for w, bits in enumerate(seq.vectors):
                bit_string = "".join(str(int(b)) for b in bits)
                fh.write(f"{seq.video_id},{w},{bit_string}\n")


def _load_videos(args):
    codebook = load_codebook(args.codebook)
    return pipeline.encode_corpus(args.data, codebook, args.trait, fps=args.fps), codebook


def _cmd_train(args) -> int:
    videos, _ = _load_videos(args)
    spec = evaluation.ModelSpec(
        arch=args.arch, task=args.task, slice_len_s=args.slice_s, trait=args.trait,
        hidden_dim=args.hidden, lr=args.lr, max_epochs=args.epochs,
        patience=args.patience, batch_size=args.batch_size,
    )
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(videos))
    n_test = max(1, int(round(args.test_fraction * len(videos))))
    n_val = max(1, int(round(spec.val_fraction * (len(videos) - n_test))))
    test_idx = order[:n_test]
    val_idx = order[n_test : n_test + n_val]
    fit_idx = order[n_test + n_val :]
    result = evaluation.run_split(videos, fit_idx, val_idx, test_idx, spec, seed=args.seed)
    chunk_report = evaluation.compute_metrics(
        result.chunk_preds, result.chunk_targets, spec.task, "chunk")
    video_report = evaluation.compute_metrics(
        result.video_preds, result.video_targets, spec.task, "video")
    for report in (chunk_report, video_report):
        if spec.task == "reg":
            print(f"{report.level}: acc={report.acc:.4f} pcc={report.pcc:.4f} "
                  f"mae={report.mae:.4f} n={report.n}")
        else:
            print(f"{report.level}: acc={report.acc:.4f} f1={report.f1:.4f} n={report.n}")
    if args.traces_out and result.traces:
        _write_traces(result.traces, Path(args.traces_out))
    if args.preds_out:
        with Path(args.preds_out).open("w", encoding="utf-8") as fh:
            fh.write("video_id,pred,target\n")
            for vid, p, t in zip(result.video_ids, result.video_preds, result.video_targets):
                fh.write(f"{vid},{float(p)!r},{float(t)!r}\n")
    return 0


def _write_traces(traces, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("chunk_id,window,w_kin,w_au,w_speech\n")
        for trace in traces:
            for w, row in enumerate(trace.weights):
                a, b, c = (float(v) for v in row)
                fh.write(f"{trace.chunk_id},{w},{a!r},{b!r},{c!r}\n")
    print(f"traces -> {path}")


def _read_pred_csv(path: str) -> tuple[list[str], np.ndarray]:
    ids = []
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        id_col = 0
        value_col = 1 if len(header) > 1 else 0
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            ids.append(parts[id_col])
            values.append(float(parts[value_col]))
    return ids, np.array(values)


def _cmd_fuse_decisions(args) -> int:
    ids0, labels = _read_pred_csv(args.labels)
    pred_lists = []
    for path in args.preds:
        ids, values = _read_pred_csv(path)
        if ids != ids0:
            print(f"prediction file {path} is not aligned with the labels", file=sys.stderr)
            return 2
        pred_lists.append(values)
    weights = fusion.decision_fuse(pred_lists, labels, metric=args.metric)
    doc = {"weights": list(weights.weights), "metric": weights.metric, "score": weights.score}
    Path(args.out).write_text(json.dumps(doc, indent=1), encoding="utf-8")
    print(f"weights {tuple(round(w, 2) for w in weights.weights)} "
          f"({weights.metric}={weights.score:.4f}) -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib

    with open(args.config, "rb") as fh:
        config = tomllib.load(fh)
    data_dir = config["data"]["dir"]
    trait = config["data"]["trait"]
    fps = float(config["data"].get("fps", DEFAULT_FPS))
    codebook = load_codebook(config["data"]["codebook"])
    videos = pipeline.encode_corpus(data_dir, codebook, trait, fps=fps)

    run = config.get("run", {})
    spec = evaluation.ModelSpec(
        arch=run.get("arch", "ff-tri"),
        task=run.get("task", "reg"),
        slice_len_s=int(run.get("slice_s", [15])[0] if isinstance(run.get("slice_s"), list)
                        else run.get("slice_s", 15)),
        trait=trait,
        hidden_dim=int(run.get("hidden", 32)),
        lr=float(run.get("lr", 0.01)),
        max_epochs=int(run.get("epochs", 100)),
        patience=int(run.get("patience", 4)),
        batch_size=int(run.get("batch_size", 32)),
    )
    slices = run.get("slice_s", [spec.slice_len_s])
    if not isinstance(slices, list):
        slices = [slices]
    results = evaluation.sweep_slices(
        videos, spec, [int(s) for s in slices],
        folds=int(run.get("folds", 10)), repeats=int(run.get("repeats", 1)),
        seed=int(run.get("seed", 0)), out_dir=args.out,
    )
    for res in results:
        primary = "pcc" if spec.task == "reg" else "f1"
        print(f"slice {res.spec.slice_len_s}s: chunk {primary}={res.chunk.primary:.4f} "
              f"video {primary}={res.video.primary:.4f}")
    print(f"report -> {Path(args.out) / 'report.csv'}")
    return 0


def _read_kineme_csv(path: str) -> dict[str, KinemeSequence]:
    rows: dict[str, list[int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) < 3:
                continue
            rows.setdefault(parts[0], []).append(int(parts[2]))
    out = {}
    k = max(max(ids) for ids in rows.values()) + 1
    k = max(k, 2)
    for vid, ids in rows.items():
        arr = np.array(ids, dtype=int)
        one_hot = np.zeros((arr.shape[0], k))
        one_hot[np.arange(arr.shape[0]), arr] = 1.0
        out[vid] = KinemeSequence(video_id=vid, ids=arr, one_hot=one_hot)
    return out


def _read_au_bits_csv(path: str) -> dict[str, AUWindowSequence]:
    rows: dict[str, list[list[int]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) < 3:
                continue
            rows.setdefault(parts[0], []).append([int(c) for c in parts[2]])
    out = {}
    for vid, bits in rows.items():
        vectors = np.array(bits, dtype=float)
        out[vid] = AUWindowSequence(video_id=vid, vectors=vectors,
                                    thresholds=np.zeros(vectors.shape[1]))
    return out


def _cmd_explain(args) -> int:
    labels = pipeline.load_labels(args.labels)
    if args.trait not in labels:
        print(f"trait {args.trait!r} not in labels file", file=sys.stderr)
        return 2
    scores = labels[args.trait]
    kineme_seqs = _read_kineme_csv(args.kinemes)
    au_seqs = _read_au_bits_csv(args.aus)
    high, low = explain.percentile_bands(scores, pct=args.pct)
    reports = [
        explain.dominant_symbols(high, args.trait, "high", kineme_seqs, au_seqs),
        explain.dominant_symbols(low, args.trait, "low", kineme_seqs, au_seqs),
    ]
    out_json = Path(args.out_dir) / f"explain_{args.trait}.json"
    out_svg = Path(args.out_dir) / f"explain_{args.trait}.svg"
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    explain.write_explanation_json(reports, out_json)
    explain.write_explanation_svg(reports, out_svg)
    for r in reports:
        kin = ",".join(str(i) for i, _ in r.top_kinemes)
        aus = ",".join(f"AU{c:02d}" for c, _ in r.top_aus)
        print(f"{r.trait} ({r.band}): kinemes [{kin}] aus [{aus}] over {r.n_videos} videos")
    print(f"reports -> {out_json}, {out_svg}")
    return 0


def _read_trace_csv(path: str):
    rows: dict[str, list[tuple[float, float, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) < 5:
                continue
            rows.setdefault(parts[0], []).append(
                (float(parts[2]), float(parts[3]), float(parts[4]))
            )
    return [
        fusion.AttentionTrace(chunk_id=cid, weights=np.array(w)) for cid, w in rows.items()
    ]


def _cmd_attention_report(args) -> int:
    runs = [_read_trace_csv(path) for path in args.traces]
    summary = explain.attention_summary(runs, trait=args.trait)
    out_csv = Path(args.out_dir) / "attention_summary.csv"
    out_svg = Path(args.out_dir) / "attention_summary.svg"
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    explain.write_attention_summary_csv([summary], out_csv)
    explain.write_attention_summary_svg([summary], out_svg)
    w = summary.mean_weights
    print(f"mean weights kin={w[0]:.3f} au={w[1]:.3f} speech={w[2]:.3f} "
          f"over {summary.runs} runs -> {out_csv}")
    return 0


def _cmd_synth(args) -> int:
    if args.config:
        config = synth.config_from_toml(args.config)
    else:
        config = synth.SynthConfig(seed=args.seed)
    paths = synth.generate_corpus(config, args.out)
    print(f"corpus of {config.n_videos} videos -> {paths.root}")
    return 0


def _cmd_oracle_suite(args) -> int:
    report = oracle_suite(fast=args.fast)
    for line in report.summary_lines():
        print(line)
    if not report.passed:
        for result in report.results:
            if result.failing_case is not None:
                print(f"failing case for {result.name}: {json.dumps(result.failing_case)}")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kineme-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw pose/AU/WAV files and dump canonical CSVs")
    p.add_argument("--pose")
    p.add_argument("--au")
    p.add_argument("--wav")
    p.add_argument("--fps", type=float, default=DEFAULT_FPS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("learn-codebook", help="learn the kineme codebook from pose CSVs")
    p.add_argument("--pose-dir", required=True)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--rank", type=int, default=20)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--fps", type=float, default=DEFAULT_FPS)
    p.add_argument("--templates-out", help="also emit template curves (CSV + SVG)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_learn_codebook)

    p = sub.add_parser("encode", help="encode one channel into per-window rows")
    p.add_argument("--codebook")
    p.add_argument("--pose")
    p.add_argument("--au")
    p.add_argument("--au-dir", help="encode every AU CSV in a directory")
    p.add_argument("--threshold-scope", choices=["video", "corpus"], default="video",
                   help="dominant-AU threshold scope when encoding a directory")
    p.add_argument("--wav")
    p.add_argument("--fps", type=float, default=DEFAULT_FPS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("train", help="train one architecture on an encoded corpus")
    p.add_argument("--arch", required=True, choices=sorted(fusion.ARCH_MODALITIES))
    p.add_argument("--task", required=True, choices=["cls", "reg"])
    p.add_argument("--trait", required=True)
    p.add_argument("--slice-s", type=int, default=15)
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--codebook", required=True)
    p.add_argument("--fps", type=float, default=DEFAULT_FPS)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--traces-out", help="attention traces CSV (af-tri only)")
    p.add_argument("--preds-out", help="video-level predictions CSV")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("fuse-decisions", help="grid-search convex weights over model scores")
    p.add_argument("--preds", nargs="+", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--metric", choices=["f1", "pcc"], default="pcc")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse_decisions)

    p = sub.add_parser("evaluate", help="run the sweep described by a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("explain", help="dominant kinemes/AUs for trait percentile bands")
    p.add_argument("--labels", required=True)
    p.add_argument("--kinemes", required=True)
    p.add_argument("--aus", required=True)
    p.add_argument("--trait", required=True)
    p.add_argument("--pct", type=float, default=10.0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("attention-report", help="aggregate attention traces over runs")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--trait", default="")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_attention_report)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", help="TOML config ([synth] table)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("oracle-suite", help="run the brute-force oracle checks")
    p.add_argument("--fast", action="store_true")
    p.set_defaults(func=_cmd_oracle_suite)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KinemeLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
