"""Ablation matrix: named variants of the scoring network, run to reports."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import DatasetManifest
from .errors import InvalidVariantParams
from .model import DEFAULT_CATEGORY_WORDS, EIGHT_CATEGORY_WORDS, QualityCategorySet
from .reports import VARIANT_ORDER, EvalReport
from .training import TrainConfig, train

_CONTEXT_LENGTH_CHOICES = (8, 16, 32)
_BACKBONE_CHOICES = ("ViT-B/16", "ViT-B/32", "ResNet-101")


@dataclass(frozen=True)
class AblationVariant:
    """One complete, runnable configuration delta."""

    id: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in VARIANT_ORDER:
            raise InvalidVariantParams(f"unknown variant id {self.id!r}")
        p = self.params
        if self.id == "backbone_swap":
            if p.get("backbone") not in _BACKBONE_CHOICES:
                raise InvalidVariantParams(
                    f"backbone_swap needs backbone in {_BACKBONE_CHOICES}, got {p.get('backbone')!r}"
                )
        elif self.id == "context_length":
            if p.get("context_length") not in _CONTEXT_LENGTH_CHOICES:
                raise InvalidVariantParams(
                    f"context_length must be one of {_CONTEXT_LENGTH_CHOICES}, "
                    f"got {p.get('context_length')!r}"
                )
        elif self.id in ("category_length", "category_type"):
            words = p.get("category_words")
            if not words or len(words) < 2:
                raise InvalidVariantParams(f"{self.id} needs an explicit category word list")
        elif self.id in ("full", "no_regression") and p:
            raise InvalidVariantParams(f"{self.id} takes no parameters, got {sorted(p)}")

    def apply(self, base: TrainConfig) -> TrainConfig:
        """Complete train/model configuration for this variant."""
        if self.id == "full":
            return replace(base, scorer="regression", category_words=())
        if self.id == "no_regression":
            return replace(base, scorer="similarity", category_words=())
        if self.id == "backbone_swap":
            return replace(base, backbone=self.params["backbone"])
        if self.id == "context_length":
            return replace(base, context_length=self.params["context_length"])
        return replace(base, category_words=tuple(self.params["category_words"]))

    def setting(self, base: TrainConfig) -> str:
        """Human-readable setting string for tables."""
        cfg = self.apply(base)
        words = cfg.category_words or DEFAULT_CATEGORY_WORDS
        kind = "scores" if all(w.isdigit() for w in words) else "adjectives"
        return f"{cfg.backbone}, {cfg.context_length}, {len(words)} {kind}"


def default_matrix() -> list[AblationVariant]:
    """The published eight-setting ablation matrix."""
    return [
        AblationVariant("full"),
        AblationVariant("no_regression"),
        AblationVariant("backbone_swap", {"backbone": "ViT-B/32"}),
        AblationVariant("backbone_swap", {"backbone": "ResNet-101"}),
        AblationVariant("context_length", {"context_length": 8}),
        AblationVariant("context_length", {"context_length": 32}),
        AblationVariant("category_length", {"category_words": EIGHT_CATEGORY_WORDS}),
        AblationVariant("category_type", {"category_words": QualityCategorySet.numeric().words}),
    ]


def run_variant(
    variant: AblationVariant,
    manifest: DatasetManifest,
    base_cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> EvalReport:
    """Train and evaluate one variant; returns its final test report."""
    cfg = variant.apply(base_cfg)
    run_dir = Path(out_dir) / cfg.hash()[:12] if out_dir is not None else None
    result = train(manifest, cfg, out_dir=run_dir)
    report = result.final_report
    if report is None:
        raise InvalidVariantParams(
            "variant run produced no evaluation; manifest needs a test split"
        )
    return replace(report, variant=variant.id, setting=variant.setting(base_cfg))


def run_matrix(
    variants: list[AblationVariant],
    manifest: DatasetManifest,
    base_cfg: TrainConfig,
    out_dir: str | Path | None = None,
    parallel: bool = False,
    max_workers: int | None = None,
) -> list[EvalReport]:
    """Run a variant list sequentially or in isolated worker processes."""
    if not parallel:
        return [run_variant(v, manifest, base_cfg, out_dir) for v in variants]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        futures = [
            pool.submit(run_variant, v, manifest, base_cfg, out_dir) for v in variants
        ]
        return [f.result() for f in futures]
