"""Transformer pieces: patch embedding, class/position tokens, MSA, encoder block."""
from __future__ import annotations

import math

import numpy as np

from . import functional as F
from .layers import GELU, Dense, Dropout, LayerNorm, Module, Parameter, Sequential, trunc_normal


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over ``(..., T, D)`` with ``heads`` heads.

    The per-head scale is ``1/sqrt(D/heads)``. Attention weights of the last
    forward pass are kept in ``self.attention`` (shape ``(B, heads, T, T)``).
    """

    def __init__(self, dim: int, heads: int, attn_dropout: float = 0.0,
                 rng: np.random.Generator | None = None):
        super().__init__()
        if dim % heads:
            raise ValueError(f"embedding dim {dim} is not divisible by heads={heads}")
        self.dim, self.heads = dim, heads
        self.head_dim = dim // heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.query = Dense(dim, dim, rng=rng)
        self.key = Dense(dim, dim, rng=rng)
        self.value = Dense(dim, dim, rng=rng)
        self.out = Dense(dim, dim, rng=rng)
        self.attn_drop = Dropout(attn_dropout)
        self.attention = None
        self._cache = None

    def _split(self, t: np.ndarray) -> np.ndarray:
        b, n, _ = t.shape
        return t.reshape(b, n, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, t: np.ndarray) -> np.ndarray:
        b, _, n, _ = t.shape
        return t.transpose(0, 2, 1, 3).reshape(b, n, self.dim)

    def forward(self, x):
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.shape[-1] != self.dim:
            raise ValueError(f"attention: input dim {x.shape[-1]} != {self.dim}")
        q = self._split(self.query.forward(x))
        k = self._split(self.key.forward(x))
        v = self._split(self.value.forward(x))
        scores = (q @ k.transpose(0, 1, 3, 2)) * x.dtype.type(self.scale)
        attn = F.softmax(scores)
        self.attention = attn
        attn_d = self.attn_drop.forward(attn)
        ctx = self._merge(attn_d @ v)
        out = self.out.forward(ctx)
        self._cache = (q, k, v, attn, attn_d, single)
        return out[0] if single else out

    def backward(self, dout):
        q, k, v, attn, attn_d, single = self._need_cache()
        if single:
            dout = dout[None]
        dctx = self._split(self.out.backward(dout))
        d_attn_d = dctx @ v.transpose(0, 1, 3, 2)
        dv = attn_d.transpose(0, 1, 3, 2) @ dctx
        d_attn = self.attn_drop.backward(d_attn_d)
        dscores = F.softmax_backward(d_attn, attn) * q.dtype.type(self.scale)
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        dx = (self.query.backward(self._merge(dq))
              + self.key.backward(self._merge(dk))
              + self.value.backward(self._merge(dv)))
        return dx[0] if single else dx


class TransformerBlock(Module):
    """Pre-norm encoder block: x + MSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, dim: int, heads: int, mlp_hidden: int, attn_dropout: float = 0.0,
                 ff_dropout: float = 0.0, rng: np.random.Generator | None = None):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, attn_dropout, rng=rng)
        self.drop1 = Dropout(ff_dropout)
        self.norm2 = LayerNorm(dim)
        self.mlp = Sequential.named([
            ("fc1", Dense(dim, mlp_hidden, rng=rng)),
            ("act", GELU()),
            ("drop1", Dropout(ff_dropout)),
            ("fc2", Dense(mlp_hidden, dim, rng=rng)),
            ("drop2", Dropout(ff_dropout)),
        ])

    def forward(self, x):
        x = x + self.drop1.forward(self.attn.forward(self.norm1.forward(x)))
        return x + self.mlp.forward(self.norm2.forward(x))

    def backward(self, dout):
        d = dout + self.norm2.backward(self.mlp.backward(dout))
        return d + self.norm1.backward(self.attn.backward(self.drop1.backward(d)))


class PatchEmbedding(Module):
    """Patchify N x C x H x W images and project each patch to ``dim``."""

    def __init__(self, image_size: int, patch_size: int, channels: int, dim: int,
                 rng: np.random.Generator | None = None):
        super().__init__()
        if image_size % patch_size:
            raise ValueError(f"image size {image_size} not divisible by patch size {patch_size}")
        self.patch_size, self.channels = patch_size, channels
        self.num_patches = (image_size // patch_size) ** 2
        self.proj = Dense(patch_size * patch_size * channels, dim, rng=rng)
        self._cache = None

    def forward(self, x):
        self._cache = x.shape
        return self.proj.forward(F.patchify(x, self.patch_size))

    def backward(self, dout):
        n, c, h, w = self._need_cache()
        return F.unpatchify(self.proj.backward(dout), self.patch_size, c, h, w)


class TokenEmbedding(Module):
    """Prepend the learnable class token and add learnable 1-D position embeddings."""

    def __init__(self, num_patches: int, dim: int, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cls_token = Parameter(trunc_normal((1, 1, dim), 0.02, rng))
        self.pos_embedding = Parameter(trunc_normal((1, num_patches + 1, dim), 0.02, rng))
        self._cache = None

    def forward(self, x):
        b, n, d = x.shape
        if n + 1 != self.pos_embedding.shape[1]:
            raise ValueError(f"expected {self.pos_embedding.shape[1] - 1} patches, got {n}")
        cls = np.broadcast_to(self.cls_token.data, (b, 1, d))
        self._cache = True
        return np.concatenate([cls, x], axis=1) + self.pos_embedding.data

    def backward(self, dout):
        self._need_cache()
        self.pos_embedding.accumulate(dout.sum(axis=0, keepdims=True))
        self.cls_token.accumulate(dout[:, :1].sum(axis=0, keepdims=True))
        return dout[:, 1:]


class ClassTokenSelect(Module):
    """Take the encoder state at sequence position 0."""

    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x):
        self._cache = x.shape
        return x[:, 0]

    def backward(self, dout):
        shape = self._need_cache()
        dx = np.zeros(shape, dtype=dout.dtype)
        dx[:, 0] = dout
        return dx
