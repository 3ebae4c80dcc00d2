"""Category relation graph: learnable global adjacency, per-observation node
features with invisibility masking, GCN encoding, and the sliding sequence of
graph representations.

Node feature layout per category row: bbox (4), confidence, depth, a learned
per-category label scalar, then the learned appearance row modulated by
depth. Rows of undetected categories are exactly zero.
"""

from __future__ import annotations

import numpy as np

from .env import N_CATEGORIES, Observation
from .module import Module
from .tensor import Tensor, concat, matmul, relu, softmax

__all__ = ["compute_adjacency", "gcn_forward", "CategoryRelationGraph", "GraphSequence", "DETECTION_FEATURES"]

DETECTION_FEATURES = 7  # bbox(4) + confidence + depth + label scalar


def compute_adjacency(e1: Tensor, e2: Tensor) -> Tensor:
    """Row-stochastic global category adjacency from the two learnable
    embedding dictionaries: row-softmax of ReLU(E1·E2ᵀ)."""
    return softmax(relu(matmul(e1, e2.transpose())), axis=1)


def gcn_forward(adjacency: Tensor, nodes: Tensor, weight: Tensor) -> Tensor:
    """Graph-convolution encoding ReLU(A·X·W)."""
    return relu(matmul(matmul(adjacency, nodes), weight))


class CategoryRelationGraph(Module):
    """Owns the adjacency dictionaries, GCN weight, and the per-category
    label/appearance embeddings that enter the node features."""

    def __init__(self, dict_width: int, appearance_width: int, feature_width: int,
                 rng: np.random.Generator, n_categories: int = N_CATEGORIES):
        super().__init__()
        self.n = n_categories
        self.appearance_width = appearance_width
        self.node_width = DETECTION_FEATURES + appearance_width
        self.feature_width = feature_width
        scale = 1.0 / np.sqrt(dict_width)
        self.e1 = self.param("e1", rng.normal(0, scale, (self.n, dict_width)))
        self.e2 = self.param("e2", rng.normal(0, scale, (self.n, dict_width)))
        self.gcn_w = self.param("gcn_w", rng.normal(0, 1.0 / np.sqrt(self.node_width), (self.node_width, feature_width)))
        self.label_embed = self.param("label_embed", rng.normal(0, 0.5, self.n))
        self.appearance = self.param("appearance", rng.normal(0, 1.0 / np.sqrt(appearance_width), (self.n, appearance_width)))
        self.app_depth_gain = self.param("app_depth_gain", np.zeros(self.n))

    def adjacency(self) -> Tensor:
        return compute_adjacency(self.e1, self.e2)

    def node_features(self, obs: Observation) -> tuple:
        """Returns (X, F_a, F_r); X = [F_r | F_a], undetected rows zeroed."""
        det_block = np.zeros((self.n, DETECTION_FEATURES - 1))
        mask = np.zeros((self.n, 1))
        depth = np.zeros((self.n, 1))
        for d in obs.detections:
            det_block[d.category, 0:4] = d.bbox
            det_block[d.category, 4] = d.confidence
            det_block[d.category, 5] = d.depth
            mask[d.category, 0] = 1.0
            depth[d.category, 0] = d.depth
        mask_t = Tensor(mask)
        label_col = self.label_embed.reshape(self.n, 1) * mask_t
        f_r = concat([Tensor(det_block), label_col], axis=1)
        modulation = Tensor(np.ones((self.n, 1))) + self.app_depth_gain.reshape(self.n, 1) * Tensor(0.1 * depth)
        f_a = self.appearance * modulation * mask_t
        x = concat([f_r, f_a], axis=1)
        return x, f_a, f_r

    def encode(self, adjacency: Tensor, obs: Observation) -> tuple:
        """Per-observation graph representation Z plus the feature blocks
        reused by the fusion stage."""
        x, f_a, f_r = self.node_features(obs)
        z = gcn_forward(adjacency, x, self.gcn_w)
        return z, f_a, f_r


class GraphSequence:
    """Ring buffer of the most recent graph representations.

    The first push after a reset pads the buffer by repetition so attention
    never sees an all-zero history.
    """

    def __init__(self, length: int):
        if length < 1:
            raise ValueError("sequence length must be >= 1")
        self.length = length
        self._items: list[Tensor] = []

    def push(self, z: Tensor) -> None:
        if not self._items:
            self._items = [z] * self.length
        else:
            self._items = self._items[1:] + [z]

    def clear(self) -> None:
        self._items = []

    def detach_all(self) -> None:
        self._items = [z.detach() for z in self._items]

    def tensors(self) -> list:
        if not self._items:
            raise RuntimeError("graph sequence is empty; push at least once")
        return list(self._items)

    def __len__(self) -> int:
        return len(self._items)
