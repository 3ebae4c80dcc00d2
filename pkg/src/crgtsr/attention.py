"""Temporal-spatial-region attention stack over the graph sequence.

Pipeline per step: the graph sequence (one N×C_f representation per recent
observation) runs through per-category temporal self-attention, then the
current representation queries the temporal output per category (spatial
attention), the result is fused with appearance/detection features through
the learned adjacency, and finally the 49 egocentric grid regions attend to
the fused graph nodes to produce the flat visual feature handed to the
policy.

All blocks are pre-norm residual transformer blocks; position embeddings
(temporal slot, node index, grid region) are learned tables.
"""

from __future__ import annotations

import numpy as np

from .graph import CategoryRelationGraph, DETECTION_FEATURES, GraphSequence
from .env import Observation, PATCH_CHANNELS, PATCH_SIZE
from .module import Module
from .tensor import (
    Tensor,
    concat,
    layer_norm,
    matmul,
    relu,
    reshape,
    scaled_dot_attention,
    transpose,
)

__all__ = [
    "Linear",
    "LayerNorm",
    "FeedForward",
    "MultiHeadAttention",
    "SDGCN",
    "TemporalAttention",
    "SpatialAttention",
    "FeatureFusion",
    "GlobalGridEncoder",
    "RegionAttention",
    "VisualEncoder",
]

N_REGIONS = PATCH_SIZE * PATCH_SIZE


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True,
                 gain: float = 1.0):
        super().__init__()
        self.w = self.param("w", rng.normal(0, gain / np.sqrt(d_in), (d_in, d_out)))
        self.b = self.param("b", np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.w)
        return out + self.b if self.b is not None else out


class LayerNorm(Module):
    def __init__(self, width: int):
        super().__init__()
        self.gamma = self.param("gamma", np.ones(width))
        self.beta = self.param("beta", np.zeros(width))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


class FeedForward(Module):
    def __init__(self, width: int, rng: np.random.Generator, hidden: int | None = None):
        super().__init__()
        hidden = hidden or 2 * width
        self.lin1 = self.child("lin1", Linear(width, hidden, rng))
        self.lin2 = self.child("lin2", Linear(hidden, width, rng))

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(relu(self.lin1(x)))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., L, C) -> (..., heads, L, C/heads)."""
    *lead, length, width = x.shape
    hd = width // heads
    x = reshape(x, (*lead, length, heads, hd))
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return transpose(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    """(..., heads, L, hd) -> (..., L, heads*hd)."""
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    x = transpose(x, axes)
    *lead, length, heads, hd = x.shape
    return reshape(x, (*lead, length, heads * hd))


class MultiHeadAttention(Module):
    """Projected multi-head scaled-dot attention over the second-to-last axis."""

    def __init__(self, width: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if width % heads != 0:
            raise ValueError(f"width {width} not divisible by {heads} heads")
        self.heads = heads
        scale = 1.0 / np.sqrt(width)
        self.wq = self.param("wq", rng.normal(0, scale, (width, width)))
        self.wk = self.param("wk", rng.normal(0, scale, (width, width)))
        self.wv = self.param("wv", rng.normal(0, scale, (width, width)))
        self.wo = self.param("wo", rng.normal(0, scale, (width, width)))

    def set_identity(self) -> None:
        """Make every projection the identity (single-head oracle checks)."""
        for w in (self.wq, self.wk, self.wv, self.wo):
            w.data[...] = np.eye(w.data.shape[0])

    def __call__(self, query: Tensor, keyvalue: Tensor | None = None) -> Tensor:
        kv = query if keyvalue is None else keyvalue
        q = _split_heads(matmul(query, self.wq), self.heads)
        k = _split_heads(matmul(kv, self.wk), self.heads)
        v = _split_heads(matmul(kv, self.wv), self.heads)
        out = _merge_heads(scaled_dot_attention(q, k, v))
        return matmul(out, self.wo)


class SDGCN(Module):
    """Graph layer whose adjacency is computed on the fly from the nodes:
    row-softmax of projected scaled-dot scores, residual ReLU update."""

    def __init__(self, width: int, rng: np.random.Generator):
        super().__init__()
        scale = 1.0 / np.sqrt(width)
        self.proj = self.param("proj", rng.normal(0, scale, (width, width)))
        self.update = self.param("update", rng.normal(0, scale, (width, width)))

    def __call__(self, nodes: Tensor) -> Tensor:
        projected = matmul(nodes, self.proj)
        mixed = scaled_dot_attention(projected, projected, nodes)
        return relu(matmul(mixed, self.update)) + nodes


class EncoderBlock(Module):
    def __init__(self, width: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.ln_att = self.child("ln_att", LayerNorm(width))
        self.mha = self.child("mha", MultiHeadAttention(width, heads, rng))
        self.ln_ff = self.child("ln_ff", LayerNorm(width))
        self.ff = self.child("ff", FeedForward(width, rng))

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.mha(self.ln_att(x))
        return x + self.ff(self.ln_ff(x))


class CrossBlock(Module):
    def __init__(self, width: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.ln_q = self.child("ln_q", LayerNorm(width))
        self.ln_kv = self.child("ln_kv", LayerNorm(width))
        self.mha = self.child("mha", MultiHeadAttention(width, heads, rng))
        self.ln_ff = self.child("ln_ff", LayerNorm(width))
        self.ff = self.child("ff", FeedForward(width, rng))

    def __call__(self, x: Tensor, kv: Tensor) -> Tensor:
        x = x + self.mha(self.ln_q(x), self.ln_kv(kv))
        return x + self.ff(self.ln_ff(x))


class DecoderBlock(Module):
    """Self-attention, cross-attention, feed-forward, each pre-norm residual."""

    def __init__(self, width: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.ln_self = self.child("ln_self", LayerNorm(width))
        self.self_mha = self.child("self_mha", MultiHeadAttention(width, heads, rng))
        self.ln_q = self.child("ln_q", LayerNorm(width))
        self.ln_kv = self.child("ln_kv", LayerNorm(width))
        self.cross_mha = self.child("cross_mha", MultiHeadAttention(width, heads, rng))
        self.ln_ff = self.child("ln_ff", LayerNorm(width))
        self.ff = self.child("ff", FeedForward(width, rng))

    def __call__(self, x: Tensor, kv: Tensor) -> Tensor:
        x = x + self.self_mha(self.ln_self(x))
        x = x + self.cross_mha(self.ln_q(x), self.ln_kv(kv))
        return x + self.ff(self.ln_ff(x))


class TemporalAttention(Module):
    """Per-category self-attention over the sequence axis, then one dynamic
    graph pass per time step across the categories."""

    def __init__(self, n_categories: int, feature_width: int, seq_len: int, heads: int,
                 layers: int, rng: np.random.Generator):
        super().__init__()
        self.n = n_categories
        self.width = feature_width
        self.pos = self.param("pos", rng.normal(0, 0.02, (seq_len, feature_width)))
        self.blocks = [self.child(f"block{i}", EncoderBlock(feature_width, heads, rng)) for i in range(layers)]
        self.sdgcn = self.child("sdgcn", SDGCN(feature_width, rng))

    def __call__(self, zs: list) -> Tensor:
        # stack L matrices of shape (N, C) into (N, L, C)
        x = concat([reshape(z, (self.n, 1, self.width)) for z in zs], axis=1)
        x = x + self.pos
        for block in self.blocks:
            x = block(x)
        per_step = transpose(x, (1, 0, 2))        # (L, N, C)
        per_step = self.sdgcn(per_step)
        return transpose(per_step, (1, 0, 2))     # (N, L, C)


class SpatialAttention(Module):
    """The current graph representation queries its temporal history per
    category, then a dynamic graph pass runs across the categories."""

    def __init__(self, n_categories: int, feature_width: int, heads: int, layers: int,
                 rng: np.random.Generator):
        super().__init__()
        self.n = n_categories
        self.width = feature_width
        self.node_pos = self.param("node_pos", rng.normal(0, 0.02, (n_categories, feature_width)))
        self.blocks = [self.child(f"block{i}", CrossBlock(feature_width, heads, rng)) for i in range(layers)]
        self.sdgcn = self.child("sdgcn", SDGCN(feature_width, rng))

    def __call__(self, z_t: Tensor, h_temporal: Tensor) -> Tensor:
        x = reshape(z_t + self.node_pos, (self.n, 1, self.width))
        for block in self.blocks:
            x = block(x, h_temporal)
        return self.sdgcn(reshape(x, (self.n, self.width)))


class FeatureFusion(Module):
    """Concatenate adjacency-mixed appearance, raw detection features, and the
    attended graph nodes; project to the region-attention width."""

    def __init__(self, appearance_width: int, feature_width: int, global_width: int,
                 rng: np.random.Generator):
        super().__init__()
        self.proj = self.child("proj", Linear(appearance_width + DETECTION_FEATURES + feature_width,
                                              global_width, rng))

    @staticmethod
    def blocks(f_a: Tensor, adjacency: Tensor, f_r: Tensor, h_s: Tensor) -> Tensor:
        return concat([relu(matmul(adjacency, f_a)), f_r, h_s], axis=1)

    def __call__(self, f_a: Tensor, adjacency: Tensor, f_r: Tensor, h_s: Tensor) -> Tensor:
        return self.proj(self.blocks(f_a, adjacency, f_r, h_s))


class GlobalGridEncoder(Module):
    """Per-cell linear embedding of the egocentric patch channels plus a
    learned region position embedding."""

    def __init__(self, global_width: int, rng: np.random.Generator):
        super().__init__()
        self.embed = self.param("embed", rng.normal(0, 1.0 / np.sqrt(PATCH_CHANNELS), (PATCH_CHANNELS, global_width)))
        self.pos = self.param("pos", rng.normal(0, 0.02, (N_REGIONS, global_width)))

    def __call__(self, patch: np.ndarray) -> Tensor:
        flat = Tensor(np.asarray(patch, dtype=np.float64).reshape(N_REGIONS, PATCH_CHANNELS))
        return matmul(flat, self.embed) + self.pos


class RegionAttention(Module):
    """Grid regions self-attend, cross-attend to the fused graph nodes, and
    mean-pool into the final visual feature row."""

    def __init__(self, global_width: int, heads: int, layers: int, rng: np.random.Generator):
        super().__init__()
        self.width = global_width
        self.blocks = [self.child(f"block{i}", DecoderBlock(global_width, heads, rng)) for i in range(layers)]

    def __call__(self, regions: Tensor, nodes: Tensor) -> Tensor:
        x = regions
        for block in self.blocks:
            x = block(x, nodes)
        pooled = x.sum(axis=0) * (1.0 / x.shape[0])
        return reshape(pooled, (1, self.width))


class VisualEncoder(Module):
    """Graph encoding plus the full attention stack; one call per step."""

    def __init__(self, cfg, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.graph = self.child("graph", CategoryRelationGraph(
            cfg.dict_width, cfg.appearance_width, cfg.feature_width, rng, cfg.n_categories))
        self.temporal = self.child("temporal", TemporalAttention(
            cfg.n_categories, cfg.feature_width, cfg.seq_len, cfg.heads, cfg.layers, rng))
        self.spatial = self.child("spatial", SpatialAttention(
            cfg.n_categories, cfg.feature_width, cfg.heads, cfg.layers, rng))
        self.fusion = self.child("fusion", FeatureFusion(
            cfg.appearance_width, cfg.feature_width, cfg.global_width, rng))
        self.grid = self.child("grid", GlobalGridEncoder(cfg.global_width, rng))
        self.region = self.child("region", RegionAttention(
            cfg.global_width, cfg.heads, cfg.layers, rng))

    def __call__(self, seq: GraphSequence, obs: Observation) -> Tensor:
        adjacency = self.graph.adjacency()
        z, f_a, f_r = self.graph.encode(adjacency, obs)
        seq.push(z)
        h_temporal = self.temporal(seq.tensors())
        h_spatial = self.spatial(z, h_temporal)
        fused = self.fusion(f_a, adjacency, f_r, h_spatial)
        regions = self.grid(obs.patch)
        return self.region(regions, fused)
