"""Optimization loop: plain SGD with warm-up + cosine annealing.

Only the context vectors and the regression head are ever optimized; the
backbone is hashed every epoch to prove it never moved. All shuffling is
derived from (seed, epoch), so resuming from a checkpoint replays the
exact parameter trajectory.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F

from .data import DatasetManifest, ImageCache, normalize_labels
from .encoders import DualEncoder, build_encoder
from .errors import (
    CheckpointMismatch,
    EmptySplit,
    EpochOutOfRange,
    NonFiniteFeature,
    NonFiniteLoss,
    NonFiniteScore,
)
from .metrics import fit_logistic, krcc, plcc, srcc
from .model import (
    QualityCategorySet,
    QualityScorer,
    SimilarityClassifierScorer,
    mse_loss,
)
from .reports import EvalReport, config_hash

CHECKPOINT_FORMAT = 1


@dataclass
class TrainConfig:
    """Hyperparameters; defaults follow the published training recipe."""

    lr: float = 0.002
    epochs: int = 100
    batch_size: int = 32
    context_length: int = 16
    warmup_epochs: int = 1
    warmup_lr: float = 1e-5
    momentum: float = 0.0
    seed: int = 0
    backbone: str = "ViT-B/16"
    stub_encoder: bool = False
    scorer: str = "regression"  # or "similarity" (classifier ablation)
    category_words: tuple[str, ...] = ()
    hidden_dim: int = 512
    activation: str = "relu"
    init_std: float = 0.02
    normalize_features: bool = False
    target_dim: str = "quality"
    eval_interval: int = 10
    split_ratio: float = 0.8
    logit_scale: float | None = None
    # desk-scale stub knobs; ignored for real backbones
    stub_embed_dim: int = 512
    stub_image_size: int = 224

    def __post_init__(self):
        if self.lr <= 0 or self.warmup_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.epochs > 0 and self.warmup_epochs >= self.epochs:
            raise ValueError("warmup_epochs must be < epochs")
        if self.context_length < 0:
            raise ValueError("context_length must be >= 0")
        if not (0.0 < self.split_ratio < 1.0):
            raise ValueError("split_ratio must be in (0, 1)")
        if self.scorer not in ("regression", "similarity"):
            raise ValueError(f"unknown scorer {self.scorer!r}")
        self.category_words = tuple(self.category_words)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        return cls(**{k: tuple(v) if k == "category_words" else v for k, v in payload.items()})

    def hash(self) -> str:
        return config_hash(self.to_dict())


def lr_at(epoch: float, cfg: TrainConfig) -> float:
    """Learning rate at `epoch`: constant warm-up, then cosine annealing.

    Continuous on the post-warmup segment (fractional epochs allowed),
    peaking at cfg.lr right after the warm-up and approaching zero at the
    final epoch.
    """
    if not (0 <= epoch < cfg.epochs):
        raise EpochOutOfRange(f"epoch {epoch} outside [0, {cfg.epochs})")
    if epoch < cfg.warmup_epochs:
        return cfg.warmup_lr
    span = cfg.epochs - cfg.warmup_epochs
    progress = (epoch - cfg.warmup_epochs) / span
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def epoch_order(seed: int, epoch: int, n: int) -> list[int]:
    """Shuffled indices for one epoch, a pure function of (seed, epoch)."""
    order = list(range(n))
    random.Random(seed * 1_000_003 + epoch).shuffle(order)
    return order


def build_encoder_from_config(cfg: TrainConfig, dtype: torch.dtype = torch.float32) -> DualEncoder:
    return build_encoder(
        cfg.backbone,
        stub=cfg.stub_encoder,
        embed_dim=cfg.stub_embed_dim,
        image_size=cfg.stub_image_size,
        dtype=dtype,
    )


def build_scorer(cfg: TrainConfig, encoder: DualEncoder) -> torch.nn.Module:
    categories = QualityCategorySet(cfg.category_words) if cfg.category_words else QualityCategorySet()
    if cfg.scorer == "similarity":
        return SimilarityClassifierScorer(
            encoder,
            categories,
            context_length=cfg.context_length,
            init_std=cfg.init_std,
            logit_scale=cfg.logit_scale,
        )
    return QualityScorer(
        encoder,
        categories,
        context_length=cfg.context_length,
        init_std=cfg.init_std,
        hidden=cfg.hidden_dim,
        activation=cfg.activation,
        normalize_features=cfg.normalize_features,
    )


@dataclass
class TrainResult:
    model: torch.nn.Module
    encoder: DualEncoder
    config: TrainConfig
    history: list[dict] = field(default_factory=list)
    reports: list[EvalReport] = field(default_factory=list)
    checkpoint_path: Path | None = None
    best_checkpoint_path: Path | None = None

    @property
    def final_report(self) -> EvalReport | None:
        return self.reports[-1] if self.reports else None


def save_checkpoint(
    path: str | Path,
    model: torch.nn.Module,
    cfg: TrainConfig,
    manifest: DatasetManifest,
    *,
    epoch: int,
    step: int,
    optimizer: torch.optim.Optimizer | None = None,
) -> Path:
    """Write the trainable state plus enough metadata to rebuild the run.

    Backbone weights are never stored; the checkpoint records the backbone
    identifier and a hash of its weights, validated again at load time.
    """
    payload = {
        "format_version": CHECKPOINT_FORMAT,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "backbone": cfg.backbone,
        "encoder_hash": model.encoder.weight_hash(),
        "scorer": cfg.scorer,
        "context": model.context.vectors.detach().clone(),
        "head": model.head.state_dict() if hasattr(model, "head") else None,
        "categories": {
            "words": list(model.categories.words),
            "levels": list(model.categories.levels),
        },
        "dataset": manifest.name,
        "label_range": tuple(manifest.label_range),
        "target_dim": cfg.target_dim,
        "epoch": epoch,
        "step": step,
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "rng": {"seed": cfg.seed, "next_epoch": epoch},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def load_checkpoint(
    path: str | Path,
    encoder: DualEncoder | None = None,
) -> tuple[torch.nn.Module, TrainConfig, dict]:
    """Rebuild a scorer from a checkpoint, re-validating the frozen backbone."""
    payload = torch.load(path, map_location="cpu")
    if payload.get("format_version") != CHECKPOINT_FORMAT:
        raise CheckpointMismatch(f"unsupported checkpoint format in {path}")
    cfg = TrainConfig.from_dict(payload["config"])
    if encoder is None:
        encoder = build_encoder_from_config(cfg)
    if encoder.weight_hash() != payload["encoder_hash"]:
        raise CheckpointMismatch(
            "frozen backbone hash differs from the one recorded at save time; "
            f"expected weights for {payload['backbone']!r}"
        )
    model = build_scorer(cfg, encoder)
    with torch.no_grad():
        model.context.vectors.copy_(payload["context"])
    if payload["head"] is not None:
        model.head.load_state_dict(payload["head"])
    return model, cfg, payload


def _step_loss(model, images, targets):
    if isinstance(model, SimilarityClassifierScorer):
        return F.cross_entropy(model.logits(images), model.bin_targets(targets))
    return mse_loss(model(images), targets)


def train(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    *,
    out_dir: str | Path | None = None,
    resume: str | Path | None = None,
    encoder: DualEncoder | None = None,
    cache_images: bool = True,
) -> TrainResult:
    """Run the full schedule on the manifest's train split.

    Per epoch: seeded shuffle, SGD steps at lr_at(epoch), loss logged;
    the test split is evaluated every `eval_interval` epochs and at the
    end. Returns the final state with the report history; when `out_dir`
    is set, writes `last.pt`, `best.pt` (by SRCC), and `trainlog.jsonl`.
    """
    torch.manual_seed(cfg.seed)
    if encoder is None:
        encoder = build_encoder_from_config(cfg)
    model = build_scorer(cfg, encoder)
    encoder_hash = encoder.weight_hash()

    norm = normalize_labels(manifest)
    train_records = norm.train_records
    if not train_records:
        raise EmptySplit("manifest has no train split; run make_split first")
    targets = torch.tensor(
        [r.label(cfg.target_dim) for r in train_records], dtype=torch.float32
    )
    cache = ImageCache(encoder.image_size, cache=cache_images)

    optimizer = torch.optim.SGD(
        model.trainable_parameters(), lr=cfg.warmup_lr, momentum=cfg.momentum
    )
    start_epoch = 0
    step = 0
    if resume is not None:
        resumed, resumed_cfg, payload = load_checkpoint(resume, encoder)
        if resumed_cfg.hash() != cfg.hash():
            raise CheckpointMismatch("resume checkpoint was produced by a different config")
        model = resumed
        optimizer = torch.optim.SGD(
            model.trainable_parameters(), lr=cfg.warmup_lr, momentum=cfg.momentum
        )
        if payload["optimizer"] is not None:
            optimizer.load_state_dict(payload["optimizer"])
        start_epoch = payload["epoch"]
        step = payload["step"]

    out_dir = Path(out_dir) if out_dir is not None else None
    log_lines: list[dict] = []
    result = TrainResult(model=model, encoder=encoder, config=cfg)
    best_srcc = -math.inf

    def maybe_evaluate(epoch: int):
        nonlocal best_srcc
        if not norm.test_records:
            return
        report = evaluate(
            model,
            norm,
            target_dim=cfg.target_dim,
            batch_size=cfg.batch_size,
            variant="full",
            config_hash_value=cfg.hash(),
        )
        result.reports.append(report)
        log_lines.append({"epoch": epoch, "eval": report.to_dict()})
        if out_dir is not None and report.srcc > best_srcc:
            result.best_checkpoint_path = save_checkpoint(
                out_dir / "best.pt", model, cfg, manifest,
                epoch=epoch + 1, step=step, optimizer=optimizer,
            )
        best_srcc = max(best_srcc, report.srcc)

    for epoch in range(start_epoch, cfg.epochs):
        lr = lr_at(epoch, cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = epoch_order(cfg.seed, epoch, len(train_records))
        loss_sum = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            images = cache.batch([train_records[i] for i in batch])
            diagnostic = (
                f"step {step} (epoch {epoch}, lr {lr}); "
                f"batch: {[train_records[i].image_path for i in batch]}"
            )
            try:
                loss = _step_loss(model, images, targets[batch])
            except (NonFiniteScore, NonFiniteFeature) as exc:
                raise NonFiniteLoss(f"diverged at {diagnostic}") from exc
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at {diagnostic}")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            loss_sum += float(loss.detach()) * len(batch)
            step += 1
        epoch_loss = loss_sum / len(order)
        log_lines.append({"epoch": epoch, "lr": lr, "train_loss": epoch_loss})
        result.history.append({"epoch": epoch, "lr": lr, "train_loss": epoch_loss})

        if encoder.weight_hash() != encoder_hash:
            raise RuntimeError("frozen backbone changed during training")

        is_last = epoch == cfg.epochs - 1
        if (cfg.eval_interval > 0 and (epoch + 1) % cfg.eval_interval == 0 and not is_last) or is_last:
            maybe_evaluate(epoch)

    if cfg.epochs == 0 and norm.test_records:
        maybe_evaluate(-1)

    if out_dir is not None:
        result.checkpoint_path = save_checkpoint(
            out_dir / "last.pt", model, cfg, manifest,
            epoch=cfg.epochs, step=step, optimizer=optimizer,
        )
        with open(out_dir / "trainlog.jsonl", "w", encoding="utf-8") as fh:
            for line in log_lines:
                fh.write(json.dumps(line, sort_keys=True) + "\n")
    return result


def predict_scores(
    model,
    manifest: DatasetManifest,
    *,
    split: str = "test",
    target_dim: str = "quality",
    batch_size: int = 32,
    image_size: int | None = None,
) -> tuple[list[float], list[float]]:
    """Denormalized predictions and raw labels for one split ('all' for every record)."""
    records = manifest.records if split == "all" else manifest.split_records(split)
    if not records:
        raise EmptySplit(f"manifest has no {split!r} records to evaluate")
    if image_size is None:
        image_size = model.encoder.image_size
    cache = ImageCache(image_size, cache=False)
    preds: list[float] = []
    with torch.no_grad():
        for lo in range(0, len(records), batch_size):
            batch = records[lo:lo + batch_size]
            scores = model(cache.batch(batch))
            preds.extend(float(s) for s in scores)
    preds = [manifest.denormalize_value(p) for p in preds]
    labels = [r.label(target_dim) for r in records]
    if manifest.normalized:
        labels = [manifest.denormalize_value(v) for v in labels]
    return preds, labels


def evaluate(
    model,
    manifest: DatasetManifest,
    *,
    target_dim: str = "quality",
    batch_size: int = 32,
    split: str = "test",
    variant: str = "full",
    setting: str = "",
    config_hash_value: str = "",
    image_size: int | None = None,
    logistic_plcc: bool = False,
) -> EvalReport:
    """Score a split and compute PLCC/SRCC/KRCC on raw-scale pairs."""
    preds, labels = predict_scores(
        model, manifest,
        split=split, target_dim=target_dim,
        batch_size=batch_size, image_size=image_size,
    )
    plcc_preds = fit_logistic(preds, labels) if logistic_plcc else preds
    return EvalReport(
        dataset=manifest.name,
        target_dim=target_dim,
        plcc=plcc(plcc_preds, labels),
        srcc=srcc(preds, labels),
        krcc=krcc(preds, labels),
        variant=variant,
        setting=setting,
        config_hash=config_hash_value,
    )
