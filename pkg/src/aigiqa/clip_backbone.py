"""Pretrained dual-encoder adapter (optional, full-scale runs only).

Wraps a contrastively pretrained vision-language checkpoint behind the
`DualEncoder` contract so the prompt-tuned scorer can run against real
weights. Requires the `transformers` extra and a weight download (cached
under AIGIQA_WEIGHTS_DIR when set); desk-scale tests never touch this.
"""

from __future__ import annotations

import os

import torch

from .encoders import DualEncoder
from .errors import AigiqaError

_HF_NAMES = {
    "ViT-B/16": "openai/clip-vit-base-patch16",
    "ViT-B/32": "openai/clip-vit-base-patch32",
    "ViT-L/14": "openai/clip-vit-large-patch14",
}

WEIGHTS_ENV = "AIGIQA_WEIGHTS_DIR"


class _TokenizerAdapter:
    """Exposes the pretrained BPE tokenizer through the PAD/START/END contract."""

    def __init__(self, tokenizer):
        self._tok = tokenizer
        self.PAD_ID = tokenizer.pad_token_id if tokenizer.pad_token_id is not None else 0
        self.START_ID = tokenizer.bos_token_id
        self.END_ID = tokenizer.eos_token_id

    def encode(self, text: str) -> list[int]:
        return self._tok(text, add_special_tokens=False)["input_ids"]


class ClipDualEncoder(DualEncoder):
    """Frozen pretrained text/image branches with custom-embedding text entry.

    The text branch re-runs the published forward pass (position embeddings,
    causal encoder, final layer norm, projection at the end-token state) on
    caller-supplied embedding sequences, which is what lets learnable
    context vectors flow through a frozen transformer.
    """

    def __init__(self, identifier: str = "ViT-B/16", cache_dir: str | None = None):
        super().__init__()
        if cache_dir is None:
            cache_dir = os.environ.get(WEIGHTS_ENV)
        if identifier not in _HF_NAMES:
            raise AigiqaError(
                f"no pretrained weights wired up for {identifier!r}; "
                f"available: {sorted(_HF_NAMES)} (ResNet backbones run stub-only)"
            )
        try:
            from transformers import CLIPModel, CLIPTokenizerFast
        except ImportError as exc:
            raise AigiqaError(
                "pretrained backbones need the 'clip' extra: pip install aigiqa[clip]"
            ) from exc

        name = _HF_NAMES[identifier]
        self.clip = CLIPModel.from_pretrained(name, cache_dir=cache_dir)
        self.clip.eval()
        self.clip.requires_grad_(False)
        self.tokenizer = _TokenizerAdapter(CLIPTokenizerFast.from_pretrained(name, cache_dir=cache_dir))

        self.identifier = identifier
        self.embed_dim = self.clip.config.projection_dim
        self.context_length = self.clip.config.text_config.max_position_embeddings
        self.image_size = self.clip.config.vision_config.image_size
        self.logit_scale = float(self.clip.logit_scale.exp())

    def token_embedding(self, ids: torch.Tensor) -> torch.Tensor:
        return self.clip.text_model.embeddings.token_embedding(ids)

    def _text_features(self, embeddings: torch.Tensor, eos_positions: torch.Tensor) -> torch.Tensor:
        from transformers.masking_utils import create_causal_mask

        text_model = self.clip.text_model
        hidden = text_model.embeddings(inputs_embeds=embeddings)
        causal_mask = create_causal_mask(
            config=text_model.config,
            inputs_embeds=hidden,
            attention_mask=None,
            past_key_values=None,
        )
        encoded = text_model.encoder(
            inputs_embeds=hidden, attention_mask=causal_mask, is_causal=True
        ).last_hidden_state
        encoded = text_model.final_layer_norm(encoded)
        pooled = encoded[torch.arange(encoded.shape[0]), eos_positions.to(encoded.device)]
        return self.clip.text_projection(pooled)

    def _image_features(self, images: torch.Tensor) -> torch.Tensor:
        return self.clip.get_image_features(pixel_values=images)
