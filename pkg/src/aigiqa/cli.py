"""Command-line surface: train, eval, score, ablate, metrics, report."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .ablation import default_matrix, run_matrix
from .data import PROFILES, load_manifest, make_split, normalize_labels, preprocess_image, save_split
from .encoders import build_encoder
from .errors import AigiqaError
from .metrics import krcc, plcc, srcc
from .reports import emit_report, parse_reports, reports_to_markdown
from .training import TrainConfig, evaluate, load_checkpoint, train
from .zero_shot import AntonymPromptPair, zero_shot_quality


def _add_train_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lr", type=float, default=0.002)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--context-length", type=int, default=16)
    parser.add_argument("--warmup-epochs", type=int, default=1)
    parser.add_argument("--warmup-lr", type=float, default=1e-5)
    parser.add_argument("--momentum", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--backbone", default="ViT-B/16")
    parser.add_argument("--stub-encoder", action="store_true",
                        help="use the deterministic stub backbone (no weight downloads)")
    parser.add_argument("--scorer", choices=("regression", "similarity"), default="regression")
    parser.add_argument("--category-words", default="",
                        help="comma-separated category words (default: the six adjectives)")
    parser.add_argument("--hidden-dim", type=int, default=512)
    parser.add_argument("--activation", default="relu")
    parser.add_argument("--normalize-features", action="store_true")
    parser.add_argument("--target-dim", default="quality")
    parser.add_argument("--eval-interval", type=int, default=10)
    parser.add_argument("--split-ratio", type=float, default=0.8)
    parser.add_argument("--stub-embed-dim", type=int, default=512)
    parser.add_argument("--stub-image-size", type=int, default=224)


def _config_from_args(args: argparse.Namespace) -> TrainConfig:
    words = tuple(w.strip() for w in args.category_words.split(",") if w.strip())
    return TrainConfig(
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        context_length=args.context_length,
        warmup_epochs=args.warmup_epochs,
        warmup_lr=args.warmup_lr,
        momentum=args.momentum,
        seed=args.seed,
        backbone=args.backbone,
        stub_encoder=args.stub_encoder,
        scorer=args.scorer,
        category_words=words,
        hidden_dim=args.hidden_dim,
        activation=args.activation,
        normalize_features=args.normalize_features,
        target_dim=args.target_dim,
        eval_interval=args.eval_interval,
        split_ratio=args.split_ratio,
        stub_embed_dim=args.stub_embed_dim,
        stub_image_size=args.stub_image_size,
    )


def _load_split_manifest(args: argparse.Namespace, cfg_seed: int, ratio: float):
    manifest = load_manifest(args.manifest, args.profile)
    if all(r.split is None for r in manifest.records):
        manifest = make_split(manifest, ratio=ratio, seed=cfg_seed)
    return manifest


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    manifest = _load_split_manifest(args, cfg.seed, cfg.split_ratio)
    out_dir = Path(args.out) / cfg.hash()[:12]
    out_dir.mkdir(parents=True, exist_ok=True)
    save_split(manifest, out_dir / "split.json", cfg.split_ratio, cfg.seed)
    result = train(manifest, cfg, out_dir=out_dir)
    print(f"checkpoint: {result.checkpoint_path}")
    if result.best_checkpoint_path:
        print(f"best checkpoint: {result.best_checkpoint_path}")
    if result.reports:
        emit_report(result.reports, "json", out_dir / "reports.json")
        final = result.reports[-1]
        print(f"final: PLCC={final.plcc:.4f} SRCC={final.srcc:.4f} KRCC={final.krcc:.4f}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    model, cfg, payload = load_checkpoint(args.checkpoint)
    manifest = _load_split_manifest(args, cfg.seed, cfg.split_ratio)
    manifest = normalize_labels(manifest)
    report = evaluate(
        model,
        manifest,
        target_dim=payload["target_dim"],
        batch_size=cfg.batch_size,
        split=args.split,
        config_hash_value=cfg.hash(),
        logistic_plcc=args.logistic_plcc,
    )
    print(f"PLCC: {report.plcc:.6f}")
    print(f"SRCC: {report.srcc:.6f}")
    print(f"KRCC: {report.krcc:.6f}")
    if args.out:
        emit_report([report], "json", args.out)
        print(f"report: {args.out}")
    return 0


def _expand_images(patterns: list[str]) -> list[str]:
    from glob import glob

    paths = [m for p in patterns for m in (sorted(glob(p)) or [p])]
    if not paths:
        raise AigiqaError("no images matched")
    return paths


def _cmd_score(args: argparse.Namespace) -> int:
    images = _expand_images(args.images)
    if args.mode == "tuned":
        if not args.checkpoint:
            raise AigiqaError("--mode tuned requires --checkpoint")
        model, cfg, payload = load_checkpoint(args.checkpoint)
        lo, hi = payload["label_range"]
        import torch

        with torch.no_grad():
            for path in images:
                pixels = preprocess_image(path, model.encoder.image_size).unsqueeze(0)
                score = float(model(pixels)[0]) * (hi - lo) + lo
                print(f"{path} {score:.6f}")
        return 0

    # real backbones cache weights under AIGIQA_WEIGHTS_DIR when set
    encoder = build_encoder(args.backbone, stub=args.stub_encoder)
    pair = AntonymPromptPair(args.positive, args.negative)
    for path in images:
        pixels = preprocess_image(path, encoder.image_size)
        print(f"{path} {zero_shot_quality(pixels, pair, encoder):.6f}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    manifest = _load_split_manifest(args, cfg.seed, cfg.split_ratio)
    if args.variants == "default":
        variants = default_matrix()
    else:
        wanted = [w.strip() for w in args.variants.split(",") if w.strip()]
        variants = []
        for name in wanted:
            matches = [v for v in default_matrix() if v.id == name]
            if not matches:
                known = sorted({v.id for v in default_matrix()})
                raise AigiqaError(f"unknown variant {name!r}; ids: {known}")
            variants.extend(matches)
    out_dir = Path(args.out)
    reports = run_matrix(variants, manifest, cfg, out_dir=out_dir, parallel=args.parallel)
    emit_report(reports, "json", out_dir / "ablation.json")
    emit_report(reports, "markdown", out_dir / "ablation.md")
    print(reports_to_markdown(reports))
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    with open(args.csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise AigiqaError(f"{args.csv} is empty")

    def floats(row):
        try:
            return [float(cell) for cell in row[:2]]
        except ValueError:
            return None

    start = 0 if floats(rows[0]) else 1
    pairs = [floats(r) for r in rows[start:] if len(r) >= 2]
    if any(p is None for p in pairs) or len(pairs) < 2:
        raise AigiqaError(f"{args.csv} must hold two numeric columns (predicted, subjective)")
    predicted = [p[0] for p in pairs]
    subjective = [p[1] for p in pairs]
    print(f"PLCC: {plcc(predicted, subjective):.6f}")
    print(f"SRCC: {srcc(predicted, subjective):.6f}")
    print(f"KRCC: {krcc(predicted, subjective):.6f}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for path in args.inputs:
        reports.extend(parse_reports(path))
    if args.out:
        emit_report(reports, args.format, args.out)
        print(f"wrote {args.out}")
    elif args.format == "markdown":
        print(reports_to_markdown(reports))
    else:
        print(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aigiqa",
        description="Prompt-tuned dual-encoder quality scoring for AI-generated images",
    )
    parser.add_argument("--version", action="version", version=f"aigiqa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the prompt-tuned scorer")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--profile", choices=sorted(PROFILES), default="agiqa-3k")
    p_train.add_argument("--out", default="runs")
    _add_train_config_args(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--profile", choices=sorted(PROFILES), default="agiqa-3k")
    p_eval.add_argument("--split", choices=("train", "test", "all"), default="test")
    p_eval.add_argument("--out", default="")
    p_eval.add_argument("--logistic-plcc", action="store_true",
                        help="report PLCC after a fitted logistic remapping")
    p_eval.set_defaults(func=_cmd_eval)

    p_score = sub.add_parser("score", help="print per-image scores")
    p_score.add_argument("images", nargs="+")
    p_score.add_argument("--mode", choices=("tuned", "zero-shot"), default="zero-shot")
    p_score.add_argument("--checkpoint", default="")
    p_score.add_argument("--backbone", default="ViT-B/16")
    p_score.add_argument("--stub-encoder", action="store_true")
    p_score.add_argument("--positive", default="Good photo.")
    p_score.add_argument("--negative", default="Bad photo.")
    p_score.set_defaults(func=_cmd_score)

    p_ablate = sub.add_parser("ablate", help="run an ablation variant set")
    p_ablate.add_argument("--manifest", required=True)
    p_ablate.add_argument("--profile", choices=sorted(PROFILES), default="agiqa-3k")
    p_ablate.add_argument("--out", default="runs/ablation")
    p_ablate.add_argument("--variants", default="default")
    p_ablate.add_argument("--parallel", action="store_true")
    _add_train_config_args(p_ablate)
    p_ablate.set_defaults(func=_cmd_ablate)

    p_metrics = sub.add_parser("metrics", help="PLCC/SRCC/KRCC from a two-column CSV")
    p_metrics.add_argument("csv")
    p_metrics.set_defaults(func=_cmd_metrics)

    p_report = sub.add_parser("report", help="render saved reports")
    p_report.add_argument("inputs", nargs="+")
    p_report.add_argument("--format", choices=("json", "csv", "markdown", "plot"), default="markdown")
    p_report.add_argument("--out", default="")
    p_report.set_defaults(func=_cmd_report)

    return parser


def cli(argv: list[str] | None = None) -> int:
    """Entry point returning an exit code: 0 ok, 1 runtime error, 2 usage."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except AigiqaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
