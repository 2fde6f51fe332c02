"""Desk-scale text and image encoders.

Small trainable transformer encoders produce token sequences in the
shared model dimension: text via vocabulary lookup + positional
embeddings + masked self-attention layers, images via non-overlapping
patch projection + self-attention layers.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from . import numerics as nm
from .config import ModelConfig
from .numerics import Tensor

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2

_RESERVED = (("<pad>", PAD_ID), ("<unk>", UNK_ID), ("<cls>", CLS_ID))
_WORD_RE = re.compile(r"[a-z0-9']+")


class VocabularyError(ValueError):
    pass


class Vocabulary:
    """Token-to-id map with fixed reserved ids (PAD=0, UNK=1, CLS=2)."""

    def __init__(self, token_to_id: dict):
        ids = sorted(token_to_id.values())
        if ids != list(range(len(token_to_id))):
            raise VocabularyError("ids must be dense in [0, |V|)")
        for token, rid in _RESERVED:
            if token_to_id.get(token) != rid:
                raise VocabularyError(f"reserved token {token!r} must map to id {rid}")
        self.token_to_id = dict(token_to_id)

    def __len__(self):
        return len(self.token_to_id)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    @classmethod
    def build(cls, texts, min_freq: int = 1) -> "Vocabulary":
        counts = Counter()
        for text in texts:
            counts.update(_WORD_RE.findall(text.lower()))
        token_to_id = {tok: i for tok, i in _RESERVED}
        for token in sorted(t for t, c in counts.items() if c >= min_freq):
            token_to_id[token] = len(token_to_id)
        return cls(token_to_id)

    def save(self, path):
        lines = [f"{tok}\t{tid}" for tok, tid in sorted(self.token_to_id.items())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        token_to_id = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            token, _, tid = line.partition("\t")
            token_to_id[token] = int(tid)
        return cls(token_to_id)

    def to_dict(self) -> dict:
        return dict(self.token_to_id)


@dataclass
class TokenizedText:
    ids: np.ndarray    # int64, length max_len
    mask: np.ndarray   # int8, 1 = real token, 0 = padding


def tokenize(text: str, vocab: Vocabulary, max_len: int) -> TokenizedText:
    """Lowercase, split on non-word characters, map with UNK fallback.

    A CLS token is always prepended, then the sequence is truncated or
    padded to ``max_len``; empty text yields [CLS] alone.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = [CLS_ID] + [vocab.lookup(t) for t in _WORD_RE.findall(text.lower())]
    ids = ids[:max_len]
    mask = [1] * len(ids)
    while len(ids) < max_len:
        ids.append(PAD_ID)
        mask.append(0)
    return TokenizedText(ids=np.asarray(ids, dtype=np.int64),
                         mask=np.asarray(mask, dtype=np.int8))


@dataclass
class EncodedPair:
    """Encoder outputs for one image-text example: token matrices in the
    shared model dimension, plus the text validity mask."""
    text_tokens: Tensor    # L x d
    text_mask: np.ndarray  # length L
    visual_tokens: Tensor  # M x d


# -- parameter initialization ---------------------------------------------


def init_text_encoder(cfg: ModelConfig, rng: np.random.Generator, dtype) -> dict:
    if cfg.vocab_size < 3:
        raise VocabularyError("vocab_size must cover the reserved ids")
    d = cfg.d_model
    params = {
        "embed": nn.gaussian_param((cfg.vocab_size, d), rng, dtype, std=1.0 / np.sqrt(d)),
        "pos": nn.gaussian_param((cfg.max_len, d), rng, dtype, std=1.0 / np.sqrt(d)),
    }
    for i in range(cfg.n_text_layers):
        params[f"layer{i}"] = nn.init_transformer_block(d, cfg.ffn_mult, rng, dtype)
    return params


def init_image_encoder(cfg: ModelConfig, rng: np.random.Generator, dtype) -> dict:
    d = cfg.d_model
    patch_dim = cfg.patch_size * cfg.patch_size * cfg.channels
    params = {
        "patch_w": nn.gaussian_param((patch_dim, d), rng, dtype),
        "patch_b": nn.zeros_param((d,), dtype),
        "pos": nn.gaussian_param((cfg.n_patches, d), rng, dtype, std=1.0 / np.sqrt(d)),
    }
    for i in range(cfg.n_vis_layers):
        params[f"layer{i}"] = nn.init_transformer_block(d, cfg.ffn_mult, rng, dtype)
    return params


# -- forward passes --------------------------------------------------------


def encode_text(ids: np.ndarray, mask: np.ndarray, params: dict, cfg: ModelConfig) -> Tensor:
    """Embed token ids and run the masked self-attention stack.

    Padded positions are excluded as attention keys, so non-pad outputs
    do not depend on padding content.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape != (cfg.max_len,):
        raise nm.ShapeError(f"encode_text: expected {cfg.max_len} ids, got {ids.shape}")
    emb = nm.embedding(params["embed"], ids)
    x = nm.add(emb, params["pos"])
    mask_bias = nn.key_mask_bias(mask, cfg.max_len, x.dtype)
    for i in range(cfg.n_text_layers):
        x = nn.transformer_block(x, params[f"layer{i}"], cfg.n_heads, mask_bias=mask_bias)
    return x


def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """Split an H x W x C grid into flattened non-overlapping patches,
    row-major over the patch grid."""
    h, w, c = image.shape
    gh, gw = h // patch_size, w // patch_size
    patches = image.reshape(gh, patch_size, gw, patch_size, c)
    patches = patches.transpose(0, 2, 1, 3, 4)
    return patches.reshape(gh * gw, patch_size * patch_size * c)


def encode_image(image: np.ndarray, params: dict, cfg: ModelConfig,
                 zero_positions: bool = False) -> Tensor:
    """Patch-project an image grid and run the self-attention stack.

    ``zero_positions`` is a test hook that drops positional embeddings,
    making the encoder equivariant under patch-grid translation.
    """
    image = np.asarray(image, dtype=params["patch_w"].dtype)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3:
        raise nm.ShapeError(f"encode_image: expected H x W or H x W x C, got {image.shape}")
    h, w, c = image.shape
    if h % cfg.patch_size or w % cfg.patch_size:
        raise nm.ShapeError(
            f"encode_image: H={h}, W={w} not divisible by patch_size={cfg.patch_size}")
    if c != cfg.channels:
        raise nm.ShapeError(f"encode_image: expected {cfg.channels} channels, got {c}")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("encode_image: pixel values must lie in [0, 1]")
    patches = nm.tensor(patchify(image, cfg.patch_size), dtype=image.dtype)
    x = nn.linear(patches, params["patch_w"], params["patch_b"])
    if not zero_positions:
        x = nm.add(x, params["pos"])
    for i in range(cfg.n_vis_layers):
        x = nn.transformer_block(x, params[f"layer{i}"], cfg.n_heads)
    return x


def encode_pair(tokens: TokenizedText, image: np.ndarray, params: dict,
                cfg: ModelConfig) -> EncodedPair:
    """Run both encoders; ``params`` holds the "text" and "vis" subtrees."""
    return EncodedPair(
        text_tokens=encode_text(tokens.ids, tokens.mask, params["text"], cfg),
        text_mask=np.asarray(tokens.mask, dtype=np.int8),
        visual_tokens=encode_image(image, params["vis"], cfg),
    )
