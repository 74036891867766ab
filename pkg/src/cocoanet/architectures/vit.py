from __future__ import annotations

import numpy as np

from ..nn import (ClassTokenSelect, Dense, Dropout, LayerNorm, PatchEmbedding, Sequential, Tanh,
                  TokenEmbedding, TransformerBlock)
from .spec import ArchitectureSpec


class VisionTransformer(Sequential):
    """Patch embedding, class token + position embeddings, pre-norm encoder, head.

    ``spec.head == "mlp"`` gives a one-hidden-layer (tanh) head of width
    ``class_head_hidden``; ``"linear"`` gives a single linear layer.
    """

    def __init__(self, spec: ArchitectureSpec, rng: np.random.Generator):
        super().__init__()
        d = spec.embed_dim
        self.patch_embed = PatchEmbedding(spec.image_size, spec.patch_size, 3, d, rng=rng)
        self.tokens = TokenEmbedding(self.patch_embed.num_patches, d, rng=rng)
        self.embed_drop = Dropout(spec.ff_dropout)
        self.encoder = Sequential.named([
            (str(i), TransformerBlock(d, spec.heads, spec.mlp_hidden, spec.attn_dropout,
                                      spec.ff_dropout, rng=rng))
            for i in range(spec.depth)
        ])
        self.select = ClassTokenSelect()
        self.norm = LayerNorm(d)
        if spec.head == "mlp":
            self.head = Sequential.named([
                ("fc1", Dense(d, spec.class_head_hidden, rng=rng)),
                ("act", Tanh()),
                ("fc2", Dense(spec.class_head_hidden, spec.num_classes, rng=rng)),
            ])
        else:
            self.head = Sequential.named([("fc", Dense(d, spec.num_classes, rng=rng))])
