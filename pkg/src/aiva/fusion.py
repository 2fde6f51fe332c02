"""Core fusion machinery of the sentiment perception network.

Bidirectional cross-attention fuses the two token sequences into a
single matrix; a stack of fusion layers then lets learnable sentiment
prototypes attend to the fused tokens with residual updates; the final
prototypes are scored by a shared per-row MLP classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import numerics as nm
from .config import ModelConfig
from .encoders import EncodedPair
from .numerics import ShapeError, Tensor


def init_prototypes(n_classes: int, d: int, seed: int, dtype=None) -> Tensor:
    """Learnable per-class prototype vectors, Gaussian(0, 1/sqrt(d))."""
    if n_classes < 2:
        raise ValueError("need at least 2 sentiment classes")
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    return nm.randn((n_classes, d), rng, std=1.0 / np.sqrt(d),
                    requires_grad=True, dtype=dtype or nm.DEFAULT_DTYPE)


def init_cross_attention(d: int, rng: np.random.Generator, dtype) -> dict:
    return {
        "wq": nn.gaussian_param((d, d), rng, dtype),
        "wk": nn.gaussian_param((d, d), rng, dtype),
        "wv": nn.gaussian_param((d, d), rng, dtype),
    }


def init_fusion_params(cfg: ModelConfig, rng: np.random.Generator, dtype,
                       prototype_seed: int) -> dict:
    """Parameter subtree for fusion: cross-attention directions, fusion
    layers, prototypes, and the classifier head."""
    d = cfg.d_model
    params: dict = {}
    if cfg.use_caf:
        params["caf"] = {
            "t": init_cross_attention(d, rng, dtype),
            "v": init_cross_attention(d, rng, dtype),
        }
    layers: dict = {}
    n_layers = cfg.n_fusion_layers if cfg.use_cmft else 1
    for j in range(n_layers):
        layer: dict = {"s": init_cross_attention(d, rng, dtype)}
        if cfg.use_cmft and cfg.z_update == "self_attention":
            layer["z"] = nn.init_transformer_block(d, cfg.ffn_mult, rng, dtype)
        layers[f"layer{j}"] = layer
    params["fusion"] = layers
    params["prototypes"] = init_prototypes(cfg.n_classes, d, prototype_seed, dtype)
    hidden = max(d // 2, 1)
    params["classifier"] = {
        "w1": nn.gaussian_param((d, hidden), rng, dtype),
        "b1": nn.zeros_param((hidden,), dtype),
        "w2": nn.gaussian_param((hidden, 1), rng, dtype),
        "b2": nn.zeros_param((1,), dtype),
    }
    return params


def cross_attention_fuse(T: Tensor, V: Tensor, params: dict, n_heads: int,
                         text_mask: np.ndarray | None = None,
                         collect_weights: list | None = None):
    """Bidirectional cross-attention: each modality queries the other.

    Returns (T_hat, V_hat, Z0) where T_hat keeps T's row count, V_hat
    keeps V's, and Z0 is their row concatenation. When a text mask is
    given, padded text positions are excluded as keys for the visual
    queries.
    """
    if T.shape[1] != V.shape[1]:
        raise ShapeError(f"cross_attention_fuse: model dims differ: {T.shape} vs {V.shape}")
    t_hat = nn.multi_head_attention(T, V, params["t"]["wq"], params["t"]["wk"],
                                    params["t"]["wv"], n_heads,
                                    collect_weights=collect_weights)
    text_bias = None
    if text_mask is not None:
        text_bias = nn.key_mask_bias(text_mask, V.shape[0], T.dtype)
    v_hat = nn.multi_head_attention(V, T, params["v"]["wq"], params["v"]["wk"],
                                    params["v"]["wv"], n_heads, mask_bias=text_bias,
                                    collect_weights=collect_weights)
    z0 = nm.concat([t_hat, v_hat], axis=0)
    return t_hat, v_hat, z0


def fusion_layer(z_prev: Tensor, s_prev: Tensor, params: dict, n_heads: int,
                 z_update: str = "self_attention",
                 z_mask: np.ndarray | None = None,
                 collect_weights: list | None = None):
    """One fusion layer: evolve the fused tokens, then let prototypes
    cross-attend to them with a residual update.

    The prototype branch is exactly attention-plus-residual (no output
    projection), so zeroing its value projection leaves the prototypes
    unchanged.
    """
    if z_update == "self_attention" and "z" in params:
        z_bias = None
        if z_mask is not None:
            z_bias = nn.key_mask_bias(z_mask, z_prev.shape[0], z_prev.dtype)
        z_j = nn.transformer_block(z_prev, params["z"], n_heads, mask_bias=z_bias,
                                   collect_weights=collect_weights)
    else:
        z_j = z_prev
    s_bias = None
    if z_mask is not None:
        s_bias = nn.key_mask_bias(z_mask, s_prev.shape[0], s_prev.dtype)
    attended = nn.multi_head_attention(s_prev, z_j, params["s"]["wq"], params["s"]["wk"],
                                       params["s"]["wv"], n_heads, mask_bias=s_bias,
                                       collect_weights=collect_weights)
    s_j = nm.add(attended, s_prev)
    return z_j, s_j


def classifier_logits(s_final: Tensor, params: dict) -> Tensor:
    """Shared two-layer MLP scoring each prototype row to one logit."""
    hidden = nm.gelu(nn.linear(s_final, params["w1"], params["b1"]))
    logits = nn.linear(hidden, params["w2"], params["b2"])
    return nm.reshape(logits, (s_final.shape[0],))


@dataclass
class Prediction:
    """Class probabilities and the logits they came from."""
    p_hat: Tensor
    logits: Tensor

    @property
    def label(self) -> int:
        return int(np.argmax(self.logits.data))


@dataclass
class ForwardResult:
    prediction: Prediction
    z_final: Tensor
    s_final: Tensor
    z_mask: np.ndarray
    attention_weights: list = field(default_factory=list)


def forward_mspn(pair: EncodedPair, params: dict, cfg: ModelConfig,
                 collect_weights: bool = False) -> ForwardResult:
    """Full fusion forward pass from an encoded pair to a prediction.

    Cross-attention fusion (or plain concatenation when disabled), then
    the fusion layer stack (or a single prototype attention step when
    disabled), then the prototype classifier.
    """
    weights: list | None = [] if collect_weights else None
    L = pair.text_tokens.shape[0]
    M = pair.visual_tokens.shape[0]
    text_mask = np.asarray(pair.text_mask, dtype=np.int8)
    z_mask = np.concatenate([text_mask, np.ones(M, dtype=np.int8)])

    if cfg.use_caf:
        _, _, z = cross_attention_fuse(pair.text_tokens, pair.visual_tokens,
                                       params["caf"], cfg.n_heads,
                                       text_mask=text_mask, collect_weights=weights)
    else:
        z = nm.concat([pair.text_tokens, pair.visual_tokens], axis=0)

    s = params["prototypes"]
    if cfg.use_cmft:
        for j in range(cfg.n_fusion_layers):
            z, s = fusion_layer(z, s, params["fusion"][f"layer{j}"], cfg.n_heads,
                                z_update=cfg.z_update, z_mask=z_mask,
                                collect_weights=weights)
    else:
        z, s = fusion_layer(z, s, params["fusion"]["layer0"], cfg.n_heads,
                            z_update="frozen", z_mask=z_mask,
                            collect_weights=weights)

    if z.shape[0] != L + M:
        raise ShapeError(f"fused row count drifted: {z.shape[0]} != {L + M}")
    logits = classifier_logits(s, params["classifier"])
    p_hat = nm.softmax(logits, axis=-1)
    return ForwardResult(
        prediction=Prediction(p_hat=p_hat, logits=logits),
        z_final=z,
        s_final=s,
        z_mask=z_mask,
        attention_weights=weights or [],
    )
