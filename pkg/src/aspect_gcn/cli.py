"""Command-line surface: training, evaluation, layer sweeps, multi-aspect
analysis, and attention heatmap export.

Every command is deterministic given its flags, seeds, and input files;
run histories additionally carry wall-clock timings, which are the one
nondeterministic field. Outputs land under --out together with a
manifest listing each artifact and its sha256.
"""

from __future__ import annotations

import argparse
import hashlib
import html
import json
import os
import sys
from pathlib import Path

import numpy as np

from .data import (
    BENCHMARK_DATASETS,
    CLASS_NAMES,
    DataError,
    Example,
    Vocabulary,
    attach_token_ids,
    load_dataset_splits,
    load_embeddings,
)
from .models import (
    CheckpointError,
    ConfigError,
    ModelConfig,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .training import (
    TrainingError,
    aggregate_runs,
    evaluate,
    paired_t_test,
    train,
    write_history,
)

ENV_DATA_ROOT = "ASPECT_GCN_DATA_ROOT"

MODEL_FLAGS = {
    "asgcn-dg": "asgcn_dg",
    "asgcn-dt": "asgcn_dt",
    "ascnn": "ascnn",
    "bilstm-attn": "bilstm_attn",
}


class CliError(RuntimeError):
    """Runtime failure with remedy text; maps to exit code 1."""


def _default_data_root() -> str:
    return os.environ.get(ENV_DATA_ROOT, "data")


def _known_datasets(data_root: Path) -> list[str]:
    names = set(BENCHMARK_DATASETS)
    if data_root.is_dir():
        names.update(p.name for p in data_root.iterdir() if p.is_dir())
    return sorted(names)


def _resolve_dataset(parser: argparse.ArgumentParser, data_root: str, name: str) -> tuple[list[Example], list[Example]]:
    root = Path(data_root)
    if name not in _known_datasets(root):
        parser.error(f"unknown dataset {name!r}; available: {', '.join(_known_datasets(root))}")
    try:
        return load_dataset_splits(root, name)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None


def _prepare(parser, args) -> tuple[list[Example], list[Example], Vocabulary, np.ndarray | None]:
    train_set, test_set = _resolve_dataset(parser, args.data_root, args.dataset)
    vocab = Vocabulary.build([train_set, test_set])
    attach_token_ids(train_set, vocab)
    attach_token_ids(test_set, vocab)
    pretrained = None
    if args.embeddings:
        if not Path(args.embeddings).exists():
            raise CliError(f"embeddings file {args.embeddings} not found")
        table, coverage = load_embeddings(args.embeddings, vocab, args.embed_dim)
        pretrained = table.weights.data
        print(f"embedding coverage: {coverage:.4f}")
    return train_set, test_set, vocab, pretrained


def _config_from_args(args, seed: int, layers: int | None = None) -> ModelConfig:
    return ModelConfig(
        variant=MODEL_FLAGS[args.model],
        num_gcn_layers=layers if layers is not None else args.layers,
        hidden_dim=args.hidden,
        embed_dim=args.embed_dim,
        use_position_weights=not args.no_position_weights,
        use_aspect_mask=not args.no_aspect_mask,
        use_gcn=not args.no_gcn,
        l2_lambda=args.l2,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=seed,
        dropout=args.dropout,
    )


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_manifest(out_dir: Path) -> None:
    artifacts = []
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            artifacts.append(
                {"path": str(p.relative_to(out_dir)), "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
            )
    _write_json(out_dir / "manifest.json", {"artifacts": artifacts})


def _parse_seeds(raw: str) -> list[int]:
    try:
        seeds = [int(s) for s in raw.split(",") if s.strip() != ""]
    except ValueError:
        raise CliError(f"invalid --seeds value {raw!r}; expected comma-separated integers") from None
    if not seeds:
        raise CliError("at least one seed is required")
    return seeds


def _parse_layer_list(raw: str) -> list[int]:
    try:
        values = [int(s) for s in raw.split(",") if s.strip() != ""]
    except ValueError:
        raise CliError(f"invalid --layers value {raw!r}; expected comma-separated integers") from None
    if not values or any(v < 1 for v in values):
        raise CliError("layer counts must be positive integers")
    return values


# ---------------------------------------------------------------------------
# commands


def cmd_train(parser, args) -> int:
    train_set, test_set, vocab, pretrained = _prepare(parser, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = _parse_seeds(args.seeds)
    reports = []
    for seed in seeds:
        cfg = _config_from_args(args, seed)
        result = train(
            cfg,
            train_set,
            test_set,
            vocab.size,
            pretrained,
            max_epochs=args.epochs,
            patience=args.patience,
        )
        save_checkpoint(out_dir / f"checkpoint_seed{seed}.bin", cfg, result.store)
        write_history(out_dir / f"history_seed{seed}.jsonl", result.history)
        _write_json(
            out_dir / f"report_seed{seed}.json",
            {"config": cfg.to_dict(), "best_epoch": result.best_epoch, "report": result.best_report.to_dict()},
        )
        reports.append(result.best_report)
        print(
            f"seed {seed}: best epoch {result.best_epoch}, "
            f"accuracy {result.best_report.accuracy:.4f}, macro-F1 {result.best_report.macro_f1:.4f}"
        )
    aggregate = aggregate_runs(reports)
    _write_json(out_dir / "aggregate.json", aggregate.to_dict())
    _write_manifest(out_dir)
    print(f"mean over {len(seeds)} seed(s): accuracy {aggregate.mean_accuracy:.4f}, macro-F1 {aggregate.mean_macro_f1:.4f}")
    return 0


def _load_checkpoint_or_fail(path: str):
    if not Path(path).exists():
        raise CliError(f"checkpoint {path} not found; train one first with the train command")
    return load_checkpoint(path)


def _split_examples(args, train_set, test_set):
    return train_set if args.split == "train" else test_set


def cmd_eval(parser, args) -> int:
    cfg, store = _load_checkpoint_or_fail(args.checkpoint)
    train_set, test_set = _resolve_dataset(parser, args.data_root, args.dataset)
    vocab = Vocabulary.build([train_set, test_set])
    if vocab.size != store["embed.weight"].shape[0]:
        raise CliError(
            f"checkpoint vocabulary size {store['embed.weight'].shape[0]} does not match "
            f"dataset vocabulary size {vocab.size}; was this checkpoint trained on {args.dataset}?"
        )
    attach_token_ids(train_set, vocab)
    attach_token_ids(test_set, vocab)
    dataset = _split_examples(args, train_set, test_set)
    report = evaluate(store, cfg, dataset)
    print(report.format_table())
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "report.json", {"config": cfg.to_dict(), "split": args.split, "report": report.to_dict()})
        _write_json(out_dir / "correctness.json", {"correct": report.correct})
        _write_manifest(out_dir)
    if args.compare:
        if not Path(args.compare).exists():
            raise CliError(f"comparison correctness file {args.compare} not found")
        other = json.loads(Path(args.compare).read_text(encoding="utf-8"))["correct"]
        result = paired_t_test(report.correct, other)
        print(f"paired t-test vs {args.compare}: t = {result.t_statistic:.4f}, p = {result.p_value:.6f}, df = {result.dof}")
    return 0


def cmd_sweep_layers(parser, args) -> int:
    train_set, test_set, vocab, pretrained = _prepare(parser, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = _parse_seeds(args.seeds)
    layer_values = _parse_layer_list(args.layers)
    rows = []
    for layer_count in layer_values:
        reports = []
        for seed in seeds:
            cfg = _config_from_args(args, seed, layers=layer_count)
            result = train(cfg, train_set, test_set, vocab.size, pretrained, max_epochs=args.epochs, patience=args.patience)
            reports.append(result.best_report)
        aggregate = aggregate_runs(reports)
        rows.append({"layers": layer_count, **aggregate.to_dict()})
        print(f"L={layer_count}: accuracy {aggregate.mean_accuracy:.4f}, macro-F1 {aggregate.mean_macro_f1:.4f}")
    with open(out_dir / "sweep.tsv", "w", encoding="utf-8") as handle:
        handle.write("layers\tmean_accuracy\tmean_macro_f1\n")
        for row in rows:
            handle.write(f"{row['layers']}\t{row['mean_accuracy']:.6f}\t{row['mean_macro_f1']:.6f}\n")
    _write_json(out_dir / "sweep.json", rows)
    _write_manifest(out_dir)
    return 0


def sentence_group_sizes(examples: list[Example]) -> dict[tuple, int]:
    """Number of aspect records sharing each distinct sentence."""
    sizes: dict[tuple, int] = {}
    for example in examples:
        key = tuple(example.tokens)
        sizes[key] = sizes.get(key, 0) + 1
    return sizes


def cmd_analyze_aspects(parser, args) -> int:
    cfg, store = _load_checkpoint_or_fail(args.checkpoint)
    train_set, test_set = _resolve_dataset(parser, args.data_root, args.dataset)
    vocab = Vocabulary.build([train_set, test_set])
    attach_token_ids(train_set, vocab)
    attach_token_ids(test_set, vocab)
    dataset = _split_examples(args, train_set, test_set)
    sizes = sentence_group_sizes(dataset)
    report = evaluate(store, cfg, dataset)
    grouped: dict[int, list[int]] = {}
    for example, correct in zip(dataset, report.correct):
        count = sizes[tuple(example.tokens)]
        if count > 7:
            continue  # tiny outlier groups are dropped from the analysis
        grouped.setdefault(count, []).append(correct)
    rows = [
        {"aspect_count": count, "samples": len(flags), "accuracy": float(np.mean(flags))}
        for count, flags in sorted(grouped.items())
    ]
    print("aspects  samples  accuracy")
    for row in rows:
        print(f"{row['aspect_count']:7d} {row['samples']:8d} {row['accuracy']:9.4f}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "aspect_groups.json", rows)
        with open(out_dir / "aspect_groups.tsv", "w", encoding="utf-8") as handle:
            handle.write("aspect_count\tsamples\taccuracy\n")
            for row in rows:
                handle.write(f"{row['aspect_count']}\t{row['samples']}\t{row['accuracy']:.6f}\n")
        _write_manifest(out_dir)
    return 0


def render_heatmap(tokens, alpha, span, predicted: str, gold: str) -> str:
    """Self-contained HTML coloring each token by its attention weight."""
    alpha = np.asarray(alpha, dtype=np.float64)
    peak = alpha.max()
    intensities = alpha / peak if peak > 0 else np.zeros_like(alpha)
    spans = []
    for i, token in enumerate(tokens):
        style = f"background: rgba(255, 140, 0, {intensities[i]:.4f});"
        classes = "tok aspect" if span[0] <= i < span[1] else "tok"
        spans.append(f'<span class="{classes}" style="{style}" title="{alpha[i]:.4f}">{html.escape(token)}</span>')
    body = " ".join(spans)
    return (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>attention heatmap</title>\n"
        "<style>body{font-family:sans-serif;margin:2em}.tok{padding:2px 4px;border-radius:3px}"
        ".aspect{text-decoration:underline;font-weight:bold}p.meta{color:#444}</style></head>\n"
        f"<body><p>{body}</p>\n"
        f'<p class="meta">prediction: {html.escape(predicted)} | gold: {html.escape(gold)}</p>\n'
        "</body></html>\n"
    )


def cmd_visualize(parser, args) -> int:
    cfg, store = _load_checkpoint_or_fail(args.checkpoint)
    train_set, test_set = _resolve_dataset(parser, args.data_root, args.dataset)
    vocab = Vocabulary.build([train_set, test_set])
    attach_token_ids(train_set, vocab)
    attach_token_ids(test_set, vocab)
    dataset = _split_examples(args, train_set, test_set)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for index in args.index:
        if not 0 <= index < len(dataset):
            raise CliError(f"example index {index} out of range (split has {len(dataset)} examples)")
        example = dataset[index]
        predicted, _, alpha = predict(store, cfg, example)
        page = render_heatmap(example.tokens, alpha, example.span, predicted, CLASS_NAMES[example.label])
        target = out_dir / f"heatmap_{index}.html"
        target.write_text(page, encoding="utf-8")
        print(f"wrote {target} (prediction: {predicted}, gold: {CLASS_NAMES[example.label]})")
    _write_manifest(out_dir)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_model_flags(sub: argparse.ArgumentParser, layer_list: bool = False) -> None:
    sub.add_argument("--model", choices=sorted(MODEL_FLAGS), default="asgcn-dg")
    if layer_list:
        sub.add_argument("--layers", default="1,2,3,4,6,8,12", help="comma-separated layer counts to sweep")
    else:
        sub.add_argument("--layers", type=int, default=2, help="number of graph/conv layers")
    sub.add_argument("--hidden", type=int, default=300)
    sub.add_argument("--embed-dim", type=int, default=300)
    sub.add_argument("--no-position-weights", action="store_true")
    sub.add_argument("--no-aspect-mask", action="store_true")
    sub.add_argument("--no-gcn", action="store_true")
    sub.add_argument("--lr", type=float, default=0.001)
    sub.add_argument("--l2", type=float, default=1e-5)
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--dropout", type=float, default=0.0)
    sub.add_argument("--epochs", type=int, default=100)
    sub.add_argument("--patience", type=int, default=5)
    sub.add_argument("--embeddings", default=None, help="pretrained word-vector text file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aspect-gcn", description=__doc__)
    parser.add_argument("--data-root", default=_default_data_root(), help=f"dataset root (env {ENV_DATA_ROOT})")
    commands = parser.add_subparsers(dest="command", required=True)

    p_train = commands.add_parser("train", help="train one run per seed and aggregate")
    p_train.add_argument("--dataset", required=True)
    p_train.add_argument("--seeds", default="1,2,3")
    p_train.add_argument("--out", required=True)
    _add_model_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = commands.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--split", choices=("train", "test"), default="test")
    p_eval.add_argument("--out", default=None)
    p_eval.add_argument("--compare", default=None, help="correctness.json of another system for a paired t-test")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = commands.add_parser("sweep-layers", help="train across layer counts and tabulate")
    p_sweep.add_argument("--dataset", required=True)
    p_sweep.add_argument("--seeds", default="1,2,3")
    p_sweep.add_argument("--out", required=True)
    _add_model_flags(p_sweep, layer_list=True)
    p_sweep.set_defaults(func=cmd_sweep_layers)

    p_analyze = commands.add_parser("analyze-aspects", help="accuracy grouped by aspects per sentence")
    p_analyze.add_argument("--dataset", required=True)
    p_analyze.add_argument("--checkpoint", required=True)
    p_analyze.add_argument("--split", choices=("train", "test"), default="train")
    p_analyze.add_argument("--out", default=None)
    p_analyze.set_defaults(func=cmd_analyze_aspects)

    p_vis = commands.add_parser("visualize", help="export attention heatmaps as static HTML")
    p_vis.add_argument("--dataset", required=True)
    p_vis.add_argument("--checkpoint", required=True)
    p_vis.add_argument("--split", choices=("train", "test"), default="test")
    p_vis.add_argument("--index", type=int, nargs="+", required=True)
    p_vis.add_argument("--out", required=True)
    p_vis.set_defaults(func=cmd_visualize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(parser, args)
    except (CliError, CheckpointError, ConfigError, DataError, TrainingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
