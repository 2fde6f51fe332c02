"""Shared network building blocks on top of the numerics library.

Parameters live in flat ``{name: Tensor}`` dicts; the helpers here take
sub-dicts keyed by short names ("wq", "ffn_w1", ...). Attention uses
row-token convention throughout: sequences are ``[tokens x d]`` matrices.
"""

from __future__ import annotations

import math

import numpy as np

from . import numerics as nm
from .numerics import ShapeError, Tensor

MASK_NEG = 1e9  # additive penalty that zeroes masked keys after softmax


def gaussian_param(shape, rng: np.random.Generator, dtype, std: float | None = None) -> Tensor:
    """Gaussian(0, 1/sqrt(fan_in)) init unless std is given."""
    if std is None:
        fan_in = shape[0] if len(shape) > 1 else shape[0]
        std = 1.0 / math.sqrt(fan_in)
    return nm.randn(shape, rng, std=std, requires_grad=True, dtype=dtype)


def zeros_param(shape, dtype) -> Tensor:
    return nm.zeros(shape, requires_grad=True, dtype=dtype)


def ones_param(shape, dtype) -> Tensor:
    return nm.ones(shape, requires_grad=True, dtype=dtype)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = nm.matmul(x, w)
    if b is not None:
        out = nm.add_bias(out, b)
    return out


def key_mask_bias(mask, n_queries: int, dtype) -> Tensor | None:
    """Additive score bias excluding masked key positions.

    ``mask`` is a length-K array of 0/1 key validity flags; returns an
    ``n_queries x K`` constant tensor of 0 / -MASK_NEG, or None when every
    key is valid.
    """
    mask = np.asarray(mask)
    if mask.all():
        return None
    row = np.where(mask.astype(bool), 0.0, -MASK_NEG).astype(dtype)
    return nm.tensor(np.tile(row, (n_queries, 1)), dtype=dtype)


def multi_head_attention(query_in: Tensor, kv_in: Tensor, wq: Tensor, wk: Tensor,
                         wv: Tensor, n_heads: int, mask_bias: Tensor | None = None,
                         collect_weights: list | None = None) -> Tensor:
    """Scaled dot-product attention with per-head column splits.

    Projections are ``d x d``; each head takes a ``d_k = d / n_heads``
    column slice of Q/K/V, and head outputs are re-concatenated. No
    output projection is applied here (callers add one where their
    architecture has it). ``collect_weights`` receives each head's
    row-stochastic attention matrix when provided.
    """
    d = query_in.shape[1]
    if d % n_heads != 0:
        raise ShapeError(f"attention: d={d} not divisible by {n_heads} heads")
    d_k = d // n_heads
    q = nm.matmul(query_in, wq)
    k = nm.matmul(kv_in, wk)
    v = nm.matmul(kv_in, wv)
    head_outs = []
    inv_sqrt_dk = 1.0 / math.sqrt(d_k)
    for h in range(n_heads):
        lo, hi = h * d_k, (h + 1) * d_k
        qh = nm.slice_cols(q, lo, hi)
        kh = nm.slice_cols(k, lo, hi)
        vh = nm.slice_cols(v, lo, hi)
        scores = nm.scale(nm.matmul(qh, nm.transpose(kh)), inv_sqrt_dk)
        if mask_bias is not None:
            scores = nm.add(scores, mask_bias)
        attn = nm.softmax(scores, axis=1)
        if collect_weights is not None:
            collect_weights.append(attn)
        head_outs.append(nm.matmul(attn, vh))
    return nm.concat(head_outs, axis=1)


def feed_forward(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    return linear(nm.gelu(linear(x, w1, b1)), w2, b2)


def transformer_block(x: Tensor, p: dict, n_heads: int,
                      mask_bias: Tensor | None = None,
                      collect_weights: list | None = None) -> Tensor:
    """Pre-norm encoder block: x + MHSA(LN(x)), then x + FFN(LN(x))."""
    normed = nm.layer_norm(x, p["ln1_g"], p["ln1_b"])
    attn = multi_head_attention(normed, normed, p["wq"], p["wk"], p["wv"],
                                n_heads, mask_bias=mask_bias,
                                collect_weights=collect_weights)
    x = nm.add(x, nm.matmul(attn, p["wo"]))
    normed = nm.layer_norm(x, p["ln2_g"], p["ln2_b"])
    return nm.add(x, feed_forward(normed, p["ffn_w1"], p["ffn_b1"], p["ffn_w2"], p["ffn_b2"]))


def init_transformer_block(d: int, ffn_mult: int, rng: np.random.Generator, dtype) -> dict:
    hidden = d * ffn_mult
    return {
        "wq": gaussian_param((d, d), rng, dtype),
        "wk": gaussian_param((d, d), rng, dtype),
        "wv": gaussian_param((d, d), rng, dtype),
        "wo": gaussian_param((d, d), rng, dtype),
        "ln1_g": ones_param((d,), dtype),
        "ln1_b": zeros_param((d,), dtype),
        "ln2_g": ones_param((d,), dtype),
        "ln2_b": zeros_param((d,), dtype),
        "ffn_w1": gaussian_param((d, hidden), rng, dtype),
        "ffn_b1": zeros_param((hidden,), dtype),
        "ffn_w2": gaussian_param((hidden, d), rng, dtype),
        "ffn_b2": zeros_param((d,), dtype),
    }


def flatten_params(tree: dict, prefix: str = "") -> dict:
    """Flatten nested dicts of tensors into {dotted.name: Tensor}."""
    flat = {}
    for key, val in tree.items():
        name = f"{prefix}.{key}" if prefix else key
        if isinstance(val, dict):
            flat.update(flatten_params(val, name))
        else:
            flat[name] = val
    return flat


def unflatten_params(flat: dict) -> dict:
    """Inverse of ``flatten_params``."""
    tree: dict = {}
    for name, tensor in flat.items():
        node = tree
        parts = name.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = tensor
    return tree
