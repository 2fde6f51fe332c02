"""Whole-model assembly: parameter construction and the raw-input
forward path (tokenized text + pixel grid -> prediction)."""

from __future__ import annotations

import numpy as np

from . import fusion, nn
from . import numerics as nm
from .config import ModelConfig
from .encoders import (
    TokenizedText,
    encode_pair,
    init_image_encoder,
    init_text_encoder,
)


def init_model_params(cfg: ModelConfig, seed: int, dtype=None) -> dict:
    """All learnable state as a nested dict of tensors, deterministic per
    seed. Flatten with ``nn.flatten_params`` for the optimizer and
    checkpoints."""
    dtype = dtype or nm.DEFAULT_DTYPE
    rng = np.random.default_rng(seed)
    params = {
        "text": init_text_encoder(cfg, rng, dtype),
        "vis": init_image_encoder(cfg, rng, dtype),
    }
    # Prototype init draws from its own stream so ablation variants that
    # skip CAF params still start from identical prototypes.
    params.update(fusion.init_fusion_params(cfg, rng, dtype, prototype_seed=seed + 1))
    return params


def forward_from_inputs(tokens: TokenizedText, image: np.ndarray, params: dict,
                        cfg: ModelConfig, collect_weights: bool = False) -> fusion.ForwardResult:
    pair = encode_pair(tokens, image, params, cfg)
    return fusion.forward_mspn(pair, params, cfg, collect_weights=collect_weights)


def set_encoder_trainable(params: dict, trainable: bool):
    """Freeze or unfreeze both encoders (fusion stays trainable)."""
    for subtree in ("text", "vis"):
        for t in nn.flatten_params(params[subtree]).values():
            t.requires_grad = trainable


def neutral_placeholder_image(cfg: ModelConfig) -> np.ndarray:
    """Mid-gray stand-in used when a request carries no image."""
    shape = (cfg.image_size, cfg.image_size, cfg.channels)
    return np.full(shape, 0.5, dtype=np.float64)
