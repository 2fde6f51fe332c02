"""aiva: an emotion-aware companion at desk scale.

Trainable multimodal sentiment perception (cross-attention fusion,
prototype-attending fusion layers, bidirectional supervised contrastive
learning), emotion-aware prompt rendering, and a chat agent service.
"""

__version__ = "0.1.0"
