"""Prompt-tuned dual-encoder quality scoring for AI-generated images."""

__version__ = "0.1.0"

from .data import (
    DatasetManifest,
    ImageRecord,
    load_manifest,
    make_split,
    normalize_labels,
    preprocess_image,
)
from .encoders import DualEncoder, StubDualEncoder, build_encoder
from .metrics import krcc, plcc, srcc
from .model import (
    LearnableContext,
    PromptEmbeddingBatch,
    QualityCategorySet,
    QualityScorer,
    RegressionHead,
    SimilarityClassifierScorer,
    assemble_prompts,
    encode_image,
    encode_text,
    fuse_features,
    mse_loss,
    predict_score,
)
from .reports import EvalReport, emit_report, parse_reports
from .training import TrainConfig, evaluate, load_checkpoint, lr_at, save_checkpoint, train
from .zero_shot import AntonymPromptPair, antonym_score, cosine_similarity, zero_shot_quality

__all__ = [
    "AntonymPromptPair",
    "DatasetManifest",
    "DualEncoder",
    "EvalReport",
    "ImageRecord",
    "LearnableContext",
    "PromptEmbeddingBatch",
    "QualityCategorySet",
    "QualityScorer",
    "RegressionHead",
    "SimilarityClassifierScorer",
    "StubDualEncoder",
    "TrainConfig",
    "antonym_score",
    "assemble_prompts",
    "build_encoder",
    "cosine_similarity",
    "emit_report",
    "encode_image",
    "encode_text",
    "evaluate",
    "fuse_features",
    "krcc",
    "load_checkpoint",
    "load_manifest",
    "lr_at",
    "make_split",
    "mse_loss",
    "normalize_labels",
    "parse_reports",
    "plcc",
    "predict_score",
    "preprocess_image",
    "save_checkpoint",
    "srcc",
    "train",
    "zero_shot_quality",
]
