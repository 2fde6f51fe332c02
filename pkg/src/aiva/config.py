"""Model architecture configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass
class ModelConfig:
    """Hyperparameters of the sentiment perception network.

    Defaults are desk-scale: small trainable encoders stand in for the
    large pretrained ones, configurable up to d_model=768. ``z_update``
    selects how the fused token matrix evolves across fusion layers:
    "self_attention" applies a transformer encoder block per layer,
    "frozen" keeps the initial fused matrix fixed. ``use_caf`` /
    ``use_cmft`` exist for ablations: plain concatenation instead of
    cross-attention fusion, and a single prototype attention step
    instead of the stacked fusion layers.
    """

    d_model: int = 64
    n_heads: int = 4
    n_text_layers: int = 2
    n_vis_layers: int = 2
    n_fusion_layers: int = 3
    max_len: int = 32
    image_size: int = 32
    patch_size: int = 8
    channels: int = 1
    n_classes: int = 3
    ffn_mult: int = 4
    z_update: str = "self_attention"
    use_caf: bool = True
    use_cmft: bool = True
    vocab_size: int = field(default=0)  # set once the vocabulary is built

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size={self.image_size} not divisible by patch_size={self.patch_size}")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.n_fusion_layers < 1:
            raise ValueError("n_fusion_layers must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.z_update not in ("self_attention", "frozen"):
            raise ValueError(f"unknown z_update mode: {self.z_update!r}")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 (grayscale) or 3 (RGB)")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)
