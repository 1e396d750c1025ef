"""Command-line pipeline: prepare, train, evaluate, predict, grid-search,
compare.

Exit codes: 0 success, 2 validation error, 3 numeric failure, 4 usage error.
Every command writes a ``manifest.json`` (resolved config, input digests,
seed, version, timestamps) into its output directory. Flag values override
config-file entries, which override built-in defaults; the config file is
flat ``key = value`` lines with ``#`` comments, found via ``--config`` or the
``LOCGCLSTM_CONFIG`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import lr_fit, lr_predict, persistence_predict
from .data import (
    SampleSet,
    build_features,
    impute_knn,
    ingest_csv,
    kfold_split,
    sliding_window,
)
from .encoding import CalendarConfig, Vocabulary
from .errors import ContractError, NumericError, ShapeMismatchError, ValidationError
from .graph import RoadGraph, load_adjacency
from .metrics import MetricsReport, evaluate
from .model import LocGCLSTM
from .training import (
    TrainConfig,
    apply_parameters,
    evaluate_model,
    grid_search,
    load_checkpoint,
    save_checkpoint,
    train,
)

ENV_CONFIG = "LOCGCLSTM_CONFIG"
NEURAL_MODELS = ("loc-gclstm", "lstm")
ALL_MODELS = NEURAL_MODELS + ("lr", "persistence")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---- config file -------------------------------------------------------------

CONFIG_KEYS = {
    "epochs": int,
    "batch_size": int,
    "lr_max": float,
    "lr_min": float,
    "calra_cycles": int,
    "bias_l2_lambda": float,
    "seed": int,
    "normalization_mode": str,
    "gcn_units": int,
    "gcn_steps": int,
    "lstm_units": int,
    "lstm_layers": int,
    "stride": int,
    "impute_k": int,
    "moment_num": int,
    "hour_num": int,
    "day_start_minute": int,
    "adjacency_orientation": str,
    "folds": int,
    "fold": int,
    "model": str,
}


def load_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(f"{path}:{lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in CONFIG_KEYS:
            raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](raw)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from None
    return values


def resolve_settings(args) -> dict:
    """defaults < config file < explicit flags."""
    settings = {
        "epochs": 600,
        "batch_size": 64,
        "lr_max": 2.4e-5,
        "lr_min": 1.5e-5,
        "calra_cycles": 4,
        "bias_l2_lambda": 0.01,
        "seed": 0,
        "normalization_mode": "dynamic",
        "gcn_units": 128,
        "gcn_steps": 1,
        "lstm_units": 256,
        "lstm_layers": 2,
        "stride": 1,
        "impute_k": 4,
        "moment_num": 288,
        "hour_num": 168,
        "day_start_minute": 0,
        "adjacency_orientation": "out",
        "folds": 5,
        "fold": 0,
        "model": "loc-gclstm",
    }
    config_path = getattr(args, "config", None) or os.environ.get(ENV_CONFIG)
    if config_path:
        settings.update(load_config_file(config_path))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def train_config_from(settings: dict, **overrides) -> TrainConfig:
    fields = (
        "epochs",
        "batch_size",
        "lr_max",
        "lr_min",
        "calra_cycles",
        "bias_l2_lambda",
        "seed",
        "normalization_mode",
        "gcn_units",
        "gcn_steps",
        "lstm_units",
        "lstm_layers",
    )
    kwargs = {f: settings[f] for f in fields}
    kwargs.update(overrides)
    return TrainConfig(**kwargs)


# ---- manifests and small writers ----------------------------------------------


def _digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, settings: dict, inputs) -> None:
    manifest = {
        "tool": "locgclstm",
        "version": __version__,
        "command": command,
        "settings": {k: settings[k] for k in sorted(settings)},
        "seed": settings.get("seed"),
        "inputs": {str(p): _digest_file(p) for p in inputs},
        "created": datetime.now(timezone.utc).isoformat(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def write_csv_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_line_chart_svg(path, series: dict, title: str, width=960, height=320) -> None:
    """Minimal polyline chart: one line per named series, shared y scale."""
    colors = ("#1b7837", "#2166ac", "#b2182b", "#756bb1")
    margin = 45
    values = [v for vals in series.values() for v in vals]
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi == lo:
        hi = lo + 1.0
    n = max(len(v) for v in series.values()) if series else 1

    def sx(i):
        return margin + i * (width - 2 * margin) / max(1, n - 1)

    def sy(v):
        return height - margin - (v - lo) * (height - 2 * margin) / (hi - lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="#333"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="#333"/>',
        f'<text x="{margin - 6}" y="{sy(lo) + 4}" text-anchor="end" font-size="10">{lo:.1f}</text>',
        f'<text x="{margin - 6}" y="{sy(hi) + 4}" text-anchor="end" font-size="10">{hi:.1f}</text>',
    ]
    for idx, (name, vals) in enumerate(series.items()):
        color = colors[idx % len(colors)]
        points = " ".join(f"{sx(i):.1f},{sy(v):.1f}" for i, v in enumerate(vals))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>'
        )
        parts.append(
            f'<text x="{width - margin + 4}" y="{margin + 14 * idx}" font-size="11" '
            f'fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


def _resolve_split(samples: SampleSet, settings: dict, split_mode: str):
    """(train_indices, eval_indices) under k-fold or the fixed test mask."""
    if split_mode == "fixed":
        if samples.test_mask is None:
            raise ValidationError(
                "--split fixed requires a cache prepared with --test-days"
            )
        test = np.flatnonzero(samples.test_mask)
        trainset = np.flatnonzero(~samples.test_mask)
        if test.size == 0 or trainset.size == 0:
            raise ValidationError("fixed split has an empty side")
        return trainset, test
    split = kfold_split(len(samples), k=settings["folds"], seed=settings["seed"])
    fold = settings["fold"]
    if not (0 <= fold < split.k):
        raise ValidationError(f"fold {fold} outside 0..{split.k - 1}")
    return split.train_indices(fold), split.test_indices(fold)


def _build_model(samples: SampleSet, cfg: TrainConfig, kind: str) -> LocGCLSTM:
    if samples.adjacency is None:
        raise ValidationError("cache has no adjacency; re-run prepare")
    return LocGCLSTM(
        graph=RoadGraph(samples.adjacency),
        feature_count=samples.feature_count,
        gcn_units=cfg.gcn_units,
        gcn_steps=cfg.gcn_steps,
        lstm_units=cfg.lstm_units,
        lstm_layers=cfg.lstm_layers,
        horizon=samples.horizon,
        normalization_mode=cfg.normalization_mode,
        use_gcn=(kind == "loc-gclstm"),
        rng=np.random.default_rng(cfg.seed),
    )


def _baseline_report(
    samples: SampleSet, kind: str, train_idx, eval_idx
) -> tuple[MetricsReport, np.ndarray]:
    preds = []
    if kind == "lr":
        model = lr_fit(samples, train_idx)
        for i in eval_idx:
            preds.append(lr_predict(model, samples.input_block(i)))
    else:
        for i in eval_idx:
            preds.append(
                persistence_predict(
                    samples.input_block(i), samples.flow_index, samples.horizon
                )
            )
    preds = np.stack(preds)
    truths = samples.target_blocks(eval_idx)
    return evaluate(preds.ravel(), truths.ravel()), preds


def _neural_report(
    samples: SampleSet, settings: dict, kind: str, train_idx, eval_idx
) -> tuple[MetricsReport, np.ndarray]:
    cfg = train_config_from(settings)
    model = _build_model(samples, cfg, kind)
    result = train(model, samples, cfg, train_idx, eval_idx)
    apply_parameters(model, result.best_parameters)
    preds = np.stack([model.predict(samples.input_block(i)) for i in eval_idx])
    truths = samples.target_blocks(eval_idx)
    return evaluate(preds.ravel(), truths.ravel()), preds


# ---- commands -----------------------------------------------------------------


def cmd_prepare(args) -> int:
    settings = resolve_settings(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph = load_adjacency(args.adjacency, orientation=settings["adjacency_orientation"])
    series = ingest_csv(args.flow, node_count=graph.node_count)
    missing = series.missing_count()
    series = impute_knn(series, k=settings["impute_k"])
    vocab = Vocabulary()
    if series.weather is not None:
        vocab = Vocabulary.fit(
            lbl for row in series.weather for lbl in row if lbl != ""
        )
    calendar = CalendarConfig(settings["moment_num"], settings["hour_num"])
    features, names, flow_idx = build_features(
        series, calendar, vocab if len(vocab) else None, settings["day_start_minute"]
    )
    x, y, t0 = sliding_window(
        features, flow_idx, series.spans(), series.times, stride=settings["stride"]
    )
    if x.shape[0] == 0:
        raise ValidationError("no samples: every span is shorter than the window")
    test_mask = None
    if args.test_days:
        day_ordinals = set()
        for token in args.test_days.split(","):
            try:
                day_ordinals.add(datetime.fromisoformat(token.strip()).toordinal())
            except ValueError:
                raise ValidationError(f"bad --test-days date {token!r}") from None
        test_mask = np.isin(t0 // 1440, sorted(day_ordinals))
    samples = SampleSet(
        x,
        y,
        names,
        flow_idx,
        t0,
        vocab_labels=vocab.labels(),
        calendar=calendar,
        day_start_minute=settings["day_start_minute"],
        test_mask=test_mask,
        adjacency=graph.adjacency,
    )
    cache_path = out_dir / "cache.bin"
    samples.save(cache_path)
    write_manifest(out_dir, "prepare", settings, [args.flow, args.adjacency])
    print(f"nodes: {graph.node_count}")
    print(f"samples: {len(samples)}")
    print(f"imputed: {missing}")
    print(f"features: {','.join(names)}")
    if test_mask is not None:
        print(f"test samples (fixed days): {int(test_mask.sum())}")
    print(f"cache: {cache_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    settings = resolve_settings(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = SampleSet.load(args.cache)
    kind = settings["model"]
    if kind not in NEURAL_MODELS:
        raise UsageError(f"--model must be one of {NEURAL_MODELS} for train, got {kind!r}")
    cfg = train_config_from(settings)
    train_idx, val_idx = _resolve_split(samples, settings, args.split)
    model = _build_model(samples, cfg, kind)
    result = train(model, samples, cfg, train_idx, val_idx)

    final_path = out_dir / "checkpoint.bin"
    save_checkpoint(final_path, model, cfg, result.history)
    apply_parameters(model, result.best_parameters)
    best_path = out_dir / "checkpoint_best.bin"
    save_checkpoint(best_path, model, cfg, result.history)

    history_path = out_dir / "history.csv"
    write_csv_rows(
        history_path,
        ["epoch", "lr", "train_loss", "val_RMSE", "val_MAE", "val_MAPE"],
        [
            [r["epoch"], r["lr"], r["train_loss"], r["val_RMSE"], r["val_MAE"], r["val_MAPE"]]
            for r in result.history
        ],
    )
    write_manifest(out_dir, "train", settings, [args.cache])
    print(f"model: {kind}")
    print(f"epochs: {cfg.epochs}  train samples: {train_idx.size}  val samples: {val_idx.size}")
    print(f"best epoch: {result.best_epoch}  best val RMSE: {result.best_val_rmse:.6f}")
    print(f"checkpoints: {final_path} (final), {best_path} (best validation)")
    return EXIT_OK


def _write_reports(out_dir: Path, report: MetricsReport, label: str, checkpoint: str) -> None:
    rows = [[k, "" if v is None else v] for k, v in report.as_dict().items()]
    write_csv_rows(out_dir / "metrics.csv", ["metric", "value"], rows)
    fmt = report.format_row()
    lines = [f"{'':10}{label:>14}"]
    for metric in ("RMSE", "MAE", "MAPE(%)", "MdAE", "MdAPE(%)"):
        lines.append(f"{metric:10}{fmt[metric]:>14}")
    lines.append(f"(percentage metrics exclude {report.mape_excluded} near-zero truths;")
    lines.append(f" parameters from: {checkpoint})")
    (out_dir / "metrics.txt").write_text("\n".join(lines) + "\n")


def cmd_evaluate(args) -> int:
    settings = resolve_settings(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = SampleSet.load(args.cache)
    kind = settings["model"]
    if kind not in ALL_MODELS:
        raise UsageError(f"unknown model {kind!r}; choose from {ALL_MODELS}")
    train_idx, eval_idx = _resolve_split(samples, settings, args.split)
    if args.eval_on == "train":
        eval_idx = train_idx
    inputs = [args.cache]
    source = kind
    if kind in NEURAL_MODELS:
        if not args.checkpoint:
            raise UsageError(f"--checkpoint is required to evaluate {kind}")
        model, _, _ = load_checkpoint(args.checkpoint)
        if model.graph.node_count != samples.node_count or model.feature_count != samples.feature_count:
            raise ValidationError(
                f"checkpoint shape (N={model.graph.node_count}, F={model.feature_count}) "
                f"does not match cache (N={samples.node_count}, F={samples.feature_count})"
            )
        preds = np.stack([model.predict(samples.input_block(i)) for i in eval_idx])
        report = evaluate(preds.ravel(), samples.target_blocks(eval_idx).ravel())
        inputs.append(args.checkpoint)
        source = args.checkpoint
    else:
        report, preds = _baseline_report(samples, kind, train_idx, eval_idx)

    truths = samples.target_blocks(eval_idx)
    _write_reports(out_dir, report, kind, source)

    pair_rows = []
    for row, sample_idx in enumerate(eval_idx):
        for node in range(samples.node_count):
            for h in range(samples.horizon):
                pair_rows.append(
                    [int(sample_idx), node, h, preds[row, node, h], truths[row, node, h]]
                )
    write_csv_rows(
        out_dir / "pairs.csv",
        ["sample", "node", "horizon", "prediction", "truth"],
        pair_rows,
    )

    if args.per_road:
        road_rows = []
        for node in range(samples.node_count):
            r = evaluate(preds[:, node, :].ravel(), truths[:, node, :].ravel())
            road_rows.append(
                [node, r.rmse, r.mae, "" if r.mape is None else r.mape, r.mdae,
                 "" if r.mdape is None else r.mdape]
            )
        write_csv_rows(
            out_dir / "per_road.csv",
            ["node", "RMSE", "MAE", "MAPE", "MdAE", "MdAPE"],
            road_rows,
        )

    if args.chart:
        order = np.argsort(samples.target_times[eval_idx], kind="stable")
        take = order[: min(200, order.size)]
        node, horizon = args.chart_node, args.chart_horizon
        if not (0 <= node < samples.node_count):
            raise UsageError(f"--chart-node {node} outside 0..{samples.node_count - 1}")
        if not (0 <= horizon < samples.horizon):
            raise UsageError(f"--chart-horizon {horizon} outside 0..{samples.horizon - 1}")
        write_line_chart_svg(
            out_dir / "chart.svg",
            {
                "truth": truths[take, node, horizon].tolist(),
                kind: preds[take, node, horizon].tolist(),
            },
            f"node {node}, horizon {horizon + 1}",
        )

    write_manifest(out_dir, "evaluate", settings, inputs)
    for metric, value in report.format_row().items():
        print(f"{metric}: {value}")
    print(f"excluded from percentage metrics: {report.mape_excluded}")
    return EXIT_OK


def cmd_predict(args) -> int:
    settings = resolve_settings(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = SampleSet.load(args.cache)
    model, _, _ = load_checkpoint(args.checkpoint)
    if not (0 <= args.sample < len(samples)):
        raise UsageError(f"--sample {args.sample} outside 0..{len(samples) - 1}")
    pred = model.predict(samples.input_block(args.sample))
    rows = [
        [args.sample, node, h, pred[node, h]]
        for node in range(samples.node_count)
        for h in range(samples.horizon)
    ]
    path = out_dir / "predictions.csv"
    write_csv_rows(path, ["sample", "node", "horizon", "prediction"], rows)
    write_manifest(out_dir, "predict", settings, [args.cache, args.checkpoint])
    print(f"predictions: {path}")
    return EXIT_OK


def cmd_grid_search(args) -> int:
    settings = resolve_settings(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = SampleSet.load(args.cache)
    if samples.adjacency is None:
        raise ValidationError("cache has no adjacency; re-run prepare")

    def int_list(text, flag):
        try:
            return tuple(int(tok) for tok in text.split(","))
        except ValueError:
            raise UsageError(f"{flag} expects comma-separated integers, got {text!r}") from None

    batch_sizes = int_list(args.batch_sizes, "--batch-sizes")
    units = int_list(args.units_grid, "--units")
    layer_counts = int_list(args.layers_grid, "--layers")
    base_cfg = train_config_from(settings)
    rows, best = grid_search(
        RoadGraph(samples.adjacency),
        samples,
        base_cfg,
        batch_sizes=batch_sizes,
        units=units,
        layer_counts=layer_counts,
        folds=settings["folds"],
    )
    header = ["layers", "units", "batch_size", "MSE", "RMSE", "MAE", "MAPE", "MdAE", "MdAPE", "failed", "best"]
    csv_rows = []
    for row in rows:
        csv_rows.append(
            [row["layers"], row["units"], row["batch_size"]]
            + [row[m] if row[m] != "" else "" for m in ("MSE", "RMSE", "MAE", "MAPE", "MdAE", "MdAPE")]
            + [row["failed"], "*" if row is best else ""]
        )
    write_csv_rows(out_dir / "grid.csv", header, csv_rows)
    write_manifest(out_dir, "grid-search", settings, [args.cache])
    failed = sum(1 for r in rows if r["failed"])
    print(f"cells: {len(rows)}  failed: {failed}")
    print(
        f"best: layers={best['layers']} units={best['units']} "
        f"batch_size={best['batch_size']} MSE={best['MSE']:.4f} RMSE={best['RMSE']:.4f}"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    settings = resolve_settings(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = SampleSet.load(args.cache)
    requested = [tok.strip() for tok in args.models.split(",") if tok.strip()]
    models = []
    for name in requested:
        if name not in ALL_MODELS:
            raise UsageError(f"unknown model {name!r}; choose from {ALL_MODELS}")
        if name in models:
            print(f"warning: duplicate model {name!r} ignored", file=sys.stderr)
            continue
        models.append(name)
    if not models:
        raise UsageError("no models to compare")
    train_idx, eval_idx = _resolve_split(samples, settings, args.split)
    reports = {}
    for name in models:
        if name in NEURAL_MODELS:
            reports[name], _ = _neural_report(samples, settings, name, train_idx, eval_idx)
        else:
            reports[name], _ = _baseline_report(samples, name, train_idx, eval_idx)
    metric_rows = ("RMSE", "MAE", "MAPE(%)", "MdAE", "MdAPE(%)")
    table = [["metric"] + models]
    for metric in metric_rows:
        table.append([metric] + [reports[m].format_row()[metric] for m in models])
    write_csv_rows(out_dir / "compare.csv", table[0], table[1:])
    width = max(len(m) for m in models) + 4
    lines = ["".join([f"{'':10}"] + [f"{m:>{width}}" for m in models])]
    for row in table[1:]:
        lines.append("".join([f"{row[0]:10}"] + [f"{v:>{width}}" for v in row[1:]]))
    text = "\n".join(lines)
    (out_dir / "compare.txt").write_text(text + "\n")
    write_manifest(out_dir, "compare", settings, [args.cache])
    print(text)
    return EXIT_OK


# ---- parser -------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(
        prog="locgclstm",
        description="Traffic flow forecasting with a location-masked GCN + stacked LSTM",
    )
    parser.add_argument("--version", action="version", version=f"locgclstm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="global random seed")
        p.add_argument("--config", help=f"config file (default: ${ENV_CONFIG})")
        p.add_argument("--out-dir", default="out", help="output directory")

    p = sub.add_parser("prepare", help="ingest CSVs into a sample cache")
    common(p)
    p.add_argument("--flow", required=True, help="long-form flow CSV")
    p.add_argument("--adjacency", required=True, help="edge list or dense 0/1 CSV")
    p.add_argument("--stride", type=int, help="window stride (default 1)")
    p.add_argument("--impute-k", dest="impute_k", type=int, help="imputation neighbors")
    p.add_argument("--moment-num", dest="moment_num", type=int, help="5-min slots per day")
    p.add_argument("--hour-num", dest="hour_num", type=int, help="hours per week")
    p.add_argument(
        "--day-start-minute", dest="day_start_minute", type=int,
        help="minute-of-day where the daily cycle starts",
    )
    p.add_argument(
        "--adjacency-orientation", dest="adjacency_orientation", choices=("in", "out"),
        help="what the adjacency file encodes (default out: src feeds dst)",
    )
    p.add_argument("--test-days", help="comma-separated ISO dates forming a fixed test split")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared cache")
    common(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--model", choices=NEURAL_MODELS, help="loc-gclstm (default) or lstm ablation")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr-max", dest="lr_max", type=float)
    p.add_argument("--lr-min", dest="lr_min", type=float)
    p.add_argument("--calra-cycles", dest="calra_cycles", type=int)
    p.add_argument("--bias-l2-lambda", dest="bias_l2_lambda", type=float)
    p.add_argument("--normalization", dest="normalization_mode", choices=("dynamic", "static"))
    p.add_argument("--gcn-units", dest="gcn_units", type=int)
    p.add_argument("--gcn-steps", dest="gcn_steps", type=int)
    p.add_argument("--units", dest="lstm_units", type=int, help="LSTM hidden units")
    p.add_argument("--lstm-layers", dest="lstm_layers", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--fold", type=int, help="validation fold index")
    p.add_argument("--split", choices=("kfold", "fixed"), default="kfold")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint or baseline on the test fold")
    common(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--checkpoint", help="required for neural models")
    p.add_argument("--model", choices=ALL_MODELS, help="default loc-gclstm")
    p.add_argument("--folds", type=int)
    p.add_argument("--fold", type=int)
    p.add_argument("--split", choices=("kfold", "fixed"), default="kfold")
    p.add_argument(
        "--eval-on", choices=("test", "train"), default="test",
        help="score the held-out fold (default) or the training fold",
    )
    p.add_argument("--per-road", action="store_true", help="also emit per-node metrics")
    p.add_argument("--chart", action="store_true", help="emit an SVG truth-vs-prediction chart")
    p.add_argument("--chart-node", type=int, default=0)
    p.add_argument("--chart-horizon", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="predictions for one cached sample")
    common(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", type=int, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("grid-search", help="train/score a hyperparameter grid")
    common(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--batch-sizes", default="16,32,64,128")
    p.add_argument("--units", dest="units_grid", default="32,64,128,256")
    p.add_argument("--layers", dest="layers_grid", default="3,4")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr-max", dest="lr_max", type=float)
    p.add_argument("--lr-min", dest="lr_min", type=float)
    p.add_argument("--calra-cycles", dest="calra_cycles", type=int)
    p.add_argument("--gcn-units", dest="gcn_units", type=int)
    p.add_argument("--folds", type=int)
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("compare", help="side-by-side metrics for several models")
    common(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--models", default="loc-gclstm,lstm,lr,persistence")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr-max", dest="lr_max", type=float)
    p.add_argument("--lr-min", dest="lr_min", type=float)
    p.add_argument("--units", dest="lstm_units", type=int)
    p.add_argument("--gcn-units", dest="gcn_units", type=int)
    p.add_argument("--lstm-layers", dest="lstm_layers", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--fold", type=int)
    p.add_argument("--split", choices=("kfold", "fixed"), default="kfold")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, ContractError, ShapeMismatchError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
