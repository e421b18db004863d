"""Prompt assembly and the trainable scoring network.

A scorer owns two trainable pieces: the shared context vectors and (for
the regression variant) a two-layer head over the fused image+text
features. The frozen backbone supplies everything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .encoders import DualEncoder
from .errors import (
    CategoryTooLong,
    EmptyBatch,
    EmptyCategorySet,
    NonFiniteScore,
    WidthMismatch,
)

DEFAULT_CATEGORY_WORDS = ("terrible", "bad", "poor", "average", "good", "perfect")
EIGHT_CATEGORY_WORDS = (
    "horrible", "terrible", "bad", "poor", "average", "good", "excellent", "perfect",
)

_ACTIVATIONS = {"relu": nn.ReLU, "gelu": nn.GELU, "tanh": nn.Tanh, "identity": nn.Identity}


class LearnableContext(nn.Module):
    """Shared trainable context vectors prepended to every category prompt."""

    def __init__(self, length: int = 16, width: int = 512, init_std: float = 0.02):
        super().__init__()
        if length < 0 or width <= 0:
            raise ValueError("context length must be >= 0 and width positive")
        self.vectors = nn.Parameter(torch.randn(length, width) * init_std)

    @property
    def length(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]


@dataclass
class QualityCategorySet:
    """Ordered quality words with score levels for the classifier variant.

    Levels default to the centers of K equal-width bins on the normalized
    [0, 1] label scale, which is also how the classifier variant bins its
    training targets.
    """

    words: tuple[str, ...] = DEFAULT_CATEGORY_WORDS
    levels: tuple[float, ...] = ()
    token_ids: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        self.words = tuple(self.words)
        if len(self.words) < 2:
            raise EmptyCategorySet(f"need at least two category words, got {len(self.words)}")
        if len(set(self.words)) != len(self.words):
            raise ValueError("category words must be distinct")
        if not self.levels:
            k = len(self.words)
            self.levels = tuple((i + 0.5) / k for i in range(k))
        self.levels = tuple(float(v) for v in self.levels)
        if len(self.levels) != len(self.words):
            raise ValueError("levels and words must have equal length")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def numeric(cls, k: int = 6) -> "QualityCategorySet":
        return cls(words=tuple(str(i) for i in range(1, k + 1)))

    def tokenize(self, tokenizer) -> "QualityCategorySet":
        self.token_ids = [tokenizer.encode(w) for w in self.words]
        if any(len(ids) == 0 for ids in self.token_ids):
            raise ValueError("a category word produced no tokens")
        return self


@dataclass
class PromptEmbeddingBatch:
    """K embedding sequences plus the end-token position of each."""

    embeddings: torch.Tensor  # K x L x d
    eos_positions: torch.Tensor  # K


def assemble_prompts(
    context: LearnableContext,
    categories: QualityCategorySet,
    encoder: DualEncoder,
) -> PromptEmbeddingBatch:
    """Lay out [start][context...][category tokens][end][pad...] per category.

    Context rows are inserted by reference so gradients reach the context
    parameter; every other position comes from the frozen embedding table.
    """
    if len(categories) == 0:
        raise EmptyCategorySet("cannot assemble prompts for zero categories")
    if not categories.token_ids:
        categories.tokenize(encoder.tokenizer)

    tok = encoder.tokenizer
    length = encoder.context_length
    m = context.length
    budget = length - m - 2  # start + end tokens
    table = encoder.token_embedding
    start_emb = table(torch.tensor([tok.START_ID]))
    end_emb = table(torch.tensor([tok.END_ID]))
    pad_emb = table(torch.tensor([tok.PAD_ID]))
    ctx = context.vectors.to(start_emb.dtype)

    rows = []
    eos = []
    for word, ids in zip(categories.words, categories.token_ids):
        if len(ids) > budget:
            raise CategoryTooLong(
                f"category {word!r} needs {len(ids)} tokens but only {budget} fit "
                f"(window {length}, context {m})"
            )
        word_emb = table(torch.tensor(ids, dtype=torch.long))
        eos_pos = 1 + m + len(ids)
        n_pad = length - eos_pos - 1
        rows.append(torch.cat([start_emb, ctx, word_emb, end_emb, pad_emb.expand(n_pad, -1)]))
        eos.append(eos_pos)
    return PromptEmbeddingBatch(torch.stack(rows), torch.tensor(eos, dtype=torch.long))


def encode_text(batch: PromptEmbeddingBatch, encoder: DualEncoder) -> torch.Tensor:
    """Frozen text branch over assembled prompts; returns K x d features."""
    return encoder.text_features(batch.embeddings, batch.eos_positions)


def encode_image(images: torch.Tensor, encoder: DualEncoder) -> torch.Tensor:
    """Frozen image branch over preprocessed pixels; returns B x d features."""
    return encoder.image_features(images)


@dataclass
class FeatureBundle:
    """One image feature, the K text features, and their fused concatenation."""

    image_feature: torch.Tensor  # d
    text_features: torch.Tensor  # K x d
    fused: torch.Tensor  # (K + 1) * d


def fuse_features(image_feature: torch.Tensor, text_features: torch.Tensor) -> torch.Tensor:
    """Concatenate [image, text_0, ..., text_{K-1}] along the feature axis.

    Accepts a single d-vector or a B x d batch of image features; text
    features are always K x d and shared across the batch.
    """
    if text_features.dim() != 2:
        raise WidthMismatch(f"text features must be K x d, got {tuple(text_features.shape)}")
    d = text_features.shape[1]
    if image_feature.shape[-1] != d:
        raise WidthMismatch(
            f"image width {image_feature.shape[-1]} != text width {d}"
        )
    flat = text_features.reshape(-1)
    if image_feature.dim() == 1:
        return torch.cat([image_feature, flat])
    if image_feature.dim() == 2:
        return torch.cat(
            [image_feature, flat.unsqueeze(0).expand(image_feature.shape[0], -1)], dim=1
        )
    raise WidthMismatch(f"image feature must be d or B x d, got {tuple(image_feature.shape)}")


class RegressionHead(nn.Module):
    """Two affine layers with a rectifier in between, projecting to one score."""

    def __init__(self, in_features: int, hidden: int = 512, activation: str = "relu"):
        super().__init__()
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}; choose from {sorted(_ACTIVATIONS)}")
        self.layer1 = nn.Linear(in_features, hidden)
        self.act = _ACTIVATIONS[activation]()
        self.layer2 = nn.Linear(hidden, 1)

    def forward(self, fused: torch.Tensor) -> torch.Tensor:
        return self.layer2(self.act(self.layer1(fused))).squeeze(-1)


def predict_score(fused: torch.Tensor, head: RegressionHead) -> torch.Tensor:
    """Run the head over fused features; scalar per row, checked finite."""
    out = head(fused)
    if not torch.isfinite(out).all():
        raise NonFiniteScore("regression head produced non-finite scores")
    return out


def mse_loss(predictions: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean squared error over a batch; rejects empty batches."""
    if predictions.numel() == 0 or targets.numel() == 0:
        raise EmptyBatch("mse_loss needs at least one prediction/target pair")
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch: {tuple(predictions.shape)} vs {tuple(targets.shape)}")
    diff = predictions - targets
    return (diff * diff).mean()


class QualityScorer(nn.Module):
    """Prompt-conditioned quality regressor over a frozen dual encoder.

    forward(): assemble prompts -> encode text once for the whole batch ->
    encode each image -> fuse -> regression head. Only the context vectors
    and the head carry gradients.
    """

    def __init__(
        self,
        encoder: DualEncoder,
        categories: QualityCategorySet | None = None,
        context_length: int = 16,
        init_std: float = 0.02,
        hidden: int = 512,
        activation: str = "relu",
        normalize_features: bool = False,
    ):
        super().__init__()
        self.encoder = encoder
        self.categories = (categories or QualityCategorySet()).tokenize(encoder.tokenizer)
        self.context = LearnableContext(context_length, encoder.embed_dim, init_std)
        self.head = RegressionHead(
            (len(self.categories) + 1) * encoder.embed_dim, hidden, activation
        )
        self.normalize_features = normalize_features

    def prompt_batch(self) -> PromptEmbeddingBatch:
        return assemble_prompts(self.context, self.categories, self.encoder)

    def text_features(self) -> torch.Tensor:
        return encode_text(self.prompt_batch(), self.encoder)

    def trainable_parameters(self):
        yield from self.context.parameters()
        yield from self.head.parameters()

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        text = self.text_features()
        image = encode_image(images, self.encoder)
        if self.normalize_features:
            text = torch.nn.functional.normalize(text, dim=-1)
            image = torch.nn.functional.normalize(image, dim=-1)
        fused = fuse_features(image, text)
        return predict_score(fused, self.head)


class SimilarityClassifierScorer(nn.Module):
    """Head-free variant: category similarities act as class logits.

    The score is the softmax-probability-weighted average of the category
    levels; training uses cross-entropy against binned targets. Only the
    context vectors are trainable.
    """

    def __init__(
        self,
        encoder: DualEncoder,
        categories: QualityCategorySet | None = None,
        context_length: int = 16,
        init_std: float = 0.02,
        logit_scale: float | None = None,
    ):
        super().__init__()
        self.encoder = encoder
        self.categories = (categories or QualityCategorySet()).tokenize(encoder.tokenizer)
        self.context = LearnableContext(context_length, encoder.embed_dim, init_std)
        self.logit_scale = encoder.logit_scale if logit_scale is None else float(logit_scale)
        self.register_buffer(
            "levels", torch.tensor(self.categories.levels, dtype=torch.float32)
        )

    def trainable_parameters(self):
        yield from self.context.parameters()

    def logits(self, images: torch.Tensor) -> torch.Tensor:
        text = assemble_prompts(self.context, self.categories, self.encoder)
        text_feats = torch.nn.functional.normalize(
            encode_text(text, self.encoder), dim=-1
        )
        image_feats = torch.nn.functional.normalize(
            encode_image(images, self.encoder), dim=-1
        )
        return self.logit_scale * image_feats @ text_feats.T

    def bin_targets(self, normalized_targets: torch.Tensor) -> torch.Tensor:
        """Equal-width class bins over the normalized [0, 1] label range."""
        k = len(self.categories)
        return (normalized_targets * k).floor().clamp(0, k - 1).long()

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        probs = torch.softmax(self.logits(images), dim=-1)
        return probs @ self.levels.to(probs.dtype)
