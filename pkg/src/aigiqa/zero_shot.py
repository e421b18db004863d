"""Antonym-prompt zero-shot quality baseline.

Scores an image by the softmax of its cosine similarities to a positive
and a negative prompt. Stateless given a frozen encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .encoders import DualEncoder
from .errors import ZeroVector

__all__ = ["AntonymPromptPair", "cosine_similarity", "antonym_score", "zero_shot_quality"]


@dataclass(frozen=True)
class AntonymPromptPair:
    positive: str = "Good photo."
    negative: str = "Bad photo."

    def __post_init__(self):
        if not self.positive or not self.negative:
            raise ValueError("both prompts must be non-empty")
        if self.positive == self.negative:
            raise ValueError("prompts must be distinct")

    def swapped(self) -> "AntonymPromptPair":
        return AntonymPromptPair(self.negative, self.positive)


def cosine_similarity(x: torch.Tensor, t: torch.Tensor) -> float:
    """(x . t) / (|x| |t|), in [-1, 1]."""
    x = torch.as_tensor(x, dtype=torch.float64).reshape(-1)
    t = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    if x.shape != t.shape:
        raise ValueError(f"width mismatch: {x.shape[0]} vs {t.shape[0]}")
    nx = float(torch.linalg.vector_norm(x))
    nt = float(torch.linalg.vector_norm(t))
    if nx == 0.0 or nt == 0.0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    s = float(torch.dot(x, t)) / (nx * nt)
    return min(1.0, max(-1.0, s))


def antonym_score(s1: float, s2: float) -> float:
    """exp(s1) / (exp(s1) + exp(s2)), strictly inside (0, 1)."""
    e1 = math.exp(s1)
    e2 = math.exp(s2)
    return e1 / (e1 + e2)


def zero_shot_quality(
    image: torch.Tensor,
    pair: AntonymPromptPair,
    encoder: DualEncoder,
) -> float:
    """Score one preprocessed image against an antonym prompt pair."""
    with torch.no_grad():
        text = encoder.encode_texts([pair.positive, pair.negative])
        feat = encoder.image_features(image)[0]
    s1 = cosine_similarity(feat, text[0])
    s2 = cosine_similarity(feat, text[1])
    return antonym_score(s1, s2)
