"""Frozen dual-encoder backbones.

The trainable parts of the network never live here: a backbone maps token
embeddings and pixels into one shared feature space and its weights are
frozen by construction. `StubDualEncoder` is the deterministic desk-scale
stand-in; real pretrained backbones are built lazily in `clip_backbone`.
"""

from __future__ import annotations

import hashlib
import re
import zlib

import torch
import torch.nn.functional as F
from torch import nn

from .errors import NonFiniteFeature, ShapeMismatch

_WORD_RE = re.compile(r"[a-z0-9]+")


class HashWordTokenizer:
    """Word-level tokenizer with stable hashed ids.

    Every lowercase word maps to a fixed id derived from its CRC32, so
    tokenization needs no fitted vocabulary and is identical across runs.
    """

    PAD_ID = 0
    START_ID = 1
    END_ID = 2
    _NUM_SPECIAL = 3

    def __init__(self, vocab_size: int = 4096):
        if vocab_size <= self._NUM_SPECIAL:
            raise ValueError("vocab_size must exceed the special-token count")
        self.vocab_size = vocab_size

    def encode(self, text: str) -> list[int]:
        span = self.vocab_size - self._NUM_SPECIAL
        return [
            self._NUM_SPECIAL + (zlib.crc32(w.encode("utf-8")) % span)
            for w in _WORD_RE.findall(text.lower())
        ]


class DualEncoder(nn.Module):
    """Contract shared by all frozen backbones.

    Subclasses fill in `_text_features` / `_image_features` and expose:
    `identifier`, `embed_dim`, `context_length`, `image_size`,
    `logit_scale`, and a tokenizer with PAD/START/END ids.
    """

    identifier: str
    embed_dim: int
    context_length: int
    image_size: int
    logit_scale: float

    def token_embedding(self, ids: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def _text_features(self, embeddings: torch.Tensor, eos_positions: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def _image_features(self, images: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def text_features(self, embeddings: torch.Tensor, eos_positions: torch.Tensor) -> torch.Tensor:
        """Encode K embedding sequences; feature k is read at eos_positions[k]."""
        if embeddings.dim() != 3 or embeddings.shape[-1] != self.embed_dim:
            raise ShapeMismatch(
                f"expected K x L x {self.embed_dim} embeddings, got {tuple(embeddings.shape)}"
            )
        if embeddings.shape[1] != self.context_length:
            raise ShapeMismatch(
                f"sequence length {embeddings.shape[1]} != context window {self.context_length}"
            )
        out = self._text_features(embeddings, eos_positions)
        if not torch.isfinite(out).all():
            raise NonFiniteFeature(f"text branch of {self.identifier} produced non-finite values")
        return out

    def image_features(self, images: torch.Tensor) -> torch.Tensor:
        """Encode a batch of preprocessed images into B x d features."""
        if images.dim() == 3:
            images = images.unsqueeze(0)
        if images.dim() != 4 or images.shape[1] != 3:
            raise ShapeMismatch(f"expected B x 3 x H x W pixels, got {tuple(images.shape)}")
        if images.shape[2] != self.image_size or images.shape[3] != self.image_size:
            raise ShapeMismatch(
                f"{self.identifier} expects {self.image_size}x{self.image_size} inputs, "
                f"got {images.shape[2]}x{images.shape[3]}"
            )
        out = self._image_features(images)
        if not torch.isfinite(out).all():
            raise NonFiniteFeature(f"image branch of {self.identifier} produced non-finite values")
        return out

    def encode_texts(self, texts: list[str]) -> torch.Tensor:
        """Encode plain strings through the standard non-learnable prompt path."""
        tok = self.tokenizer
        rows = []
        eos = []
        for text in texts:
            ids = [tok.START_ID, *tok.encode(text), tok.END_ID]
            if len(ids) > self.context_length:
                raise ShapeMismatch(f"text does not fit the context window: {text!r}")
            eos.append(len(ids) - 1)
            ids = ids + [tok.PAD_ID] * (self.context_length - len(ids))
            rows.append(torch.tensor(ids, dtype=torch.long))
        embeddings = self.token_embedding(torch.stack(rows))
        return self.text_features(embeddings, torch.tensor(eos, dtype=torch.long))

    def weight_hash(self) -> str:
        """SHA-256 over all weights; used to prove the backbone never moves."""
        h = hashlib.sha256()
        for name, tensor in sorted(self.state_dict().items()):
            h.update(name.encode("utf-8"))
            h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
        return h.hexdigest()


class StubDualEncoder(DualEncoder):
    """Deterministic stand-in for a pretrained dual encoder.

    Weights are derived from the identifier string, so two instances with
    the same identifier are bit-identical and different identifiers give
    genuinely different feature maps (which is what the backbone-swap
    ablation needs at desk scale). The text branch is a small fixed tanh
    recurrence read out at the end-token position, mirroring a causal
    encoder: the feature depends on every position up to and including
    the end token and on nothing after it. All weights are buffers, never
    parameters, so no optimizer can touch them.
    """

    _POOL = 8  # image branch pools pixels to a POOL x POOL grid

    def __init__(
        self,
        identifier: str = "stub:ViT-B/16",
        embed_dim: int = 512,
        context_length: int = 77,
        vocab_size: int = 4096,
        image_size: int = 224,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        self.identifier = identifier
        self.embed_dim = embed_dim
        self.context_length = context_length
        self.image_size = image_size
        self.logit_scale = 100.0
        self.tokenizer = HashWordTokenizer(vocab_size)

        g = torch.Generator().manual_seed(zlib.crc32(identifier.encode("utf-8")) & 0x7FFFFFFF)

        def rand(*shape, scale):
            return (torch.randn(*shape, generator=g) * scale).to(dtype)

        d = embed_dim
        self.register_buffer("tok_table", rand(vocab_size, d, scale=0.02))
        self.register_buffer("w_in", rand(d, d, scale=d ** -0.5))
        self.register_buffer("w_rec", rand(d, d, scale=0.5 * d ** -0.5))
        self.register_buffer("w_txt_out", rand(d, d, scale=d ** -0.5))
        grid = 3 * self._POOL * self._POOL
        self.register_buffer("w_img_1", rand(d, grid, scale=grid ** -0.5))
        self.register_buffer("w_img_2", rand(d, d, scale=d ** -0.5))

    def token_embedding(self, ids: torch.Tensor) -> torch.Tensor:
        return self.tok_table[ids]

    def _text_features(self, embeddings: torch.Tensor, eos_positions: torch.Tensor) -> torch.Tensor:
        k = embeddings.shape[0]
        h = embeddings.new_zeros(k, self.embed_dim)
        feats = embeddings.new_zeros(k, self.embed_dim)
        eos = eos_positions.to(embeddings.device)
        for pos in range(int(eos.max().item()) + 1):
            h = torch.tanh(embeddings[:, pos, :] @ self.w_in.T + h @ self.w_rec.T)
            feats = torch.where((eos == pos).unsqueeze(1), h, feats)
        return feats @ self.w_txt_out.T

    def _image_features(self, images: torch.Tensor) -> torch.Tensor:
        pooled = F.adaptive_avg_pool2d(images.to(self.w_img_1.dtype), self._POOL)
        flat = pooled.flatten(start_dim=1)
        return torch.tanh(flat @ self.w_img_1.T) @ self.w_img_2.T


def build_encoder(
    backbone: str = "ViT-B/16",
    stub: bool = True,
    *,
    embed_dim: int = 512,
    image_size: int = 224,
    dtype: torch.dtype = torch.float32,
    cache_dir: str | None = None,
) -> DualEncoder:
    """Build the frozen backbone named by `backbone`.

    With `stub=True` (the default for desk-scale runs) the deterministic
    stub is keyed on the backbone name; otherwise pretrained weights are
    fetched through `clip_backbone`.
    """
    if stub:
        return StubDualEncoder(
            identifier=f"stub:{backbone}",
            embed_dim=embed_dim,
            image_size=image_size,
            dtype=dtype,
        )
    from .clip_backbone import ClipDualEncoder

    return ClipDualEncoder(backbone, cache_dir=cache_dir)
