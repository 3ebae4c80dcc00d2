"""Full models: the shared visual encoder plus either the imitation head
(MLP over the visual feature and target embedding) or the recurrent
actor-critic policy head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import Linear, VisualEncoder
from .config import RunConfig
from .graph import GraphSequence
from .module import Module
from .tensor import Tensor, concat, lstm_cell, matmul, relu, reshape

__all__ = ["PretrainModel", "PolicyModel", "PolicyState", "N_ACTIONS"]

N_ACTIONS = 6


def _onehot_row(index: int, n: int) -> Tensor:
    row = np.zeros((1, n))
    row[0, index] = 1.0
    return Tensor(row)


class _TargetEmbedding(Module):
    def __init__(self, cfg: RunConfig, rng: np.random.Generator):
        super().__init__()
        self.n = cfg.n_categories
        self.table = self.param("table", rng.normal(0, 0.1, (cfg.n_categories, cfg.target_width)))

    def __call__(self, target: int) -> Tensor:
        return matmul(_onehot_row(target, self.n), self.table)


class PretrainModel(Module):
    """Encoder plus a direct MLP action head for supervised imitation."""

    def __init__(self, cfg: RunConfig, rng: np.random.Generator | None = None):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        rng = rng or np.random.default_rng(cfg.seed)
        self.encoder = self.child("encoder", VisualEncoder(cfg, rng))
        self.target_embed = self.child("target_embed", _TargetEmbedding(cfg, rng))
        head_in = cfg.global_width + cfg.target_width
        self.head1 = self.child("head1", Linear(head_in, cfg.global_width, rng))
        # small output gain keeps the untrained action distribution near uniform
        self.head2 = self.child("head2", Linear(cfg.global_width, N_ACTIONS, rng, gain=0.05))

    def new_sequence(self) -> GraphSequence:
        return GraphSequence(self.cfg.seq_len)

    def action_logits(self, seq: GraphSequence, obs, target: int) -> Tensor:
        features = self.encoder(seq, obs)
        x = concat([features, self.target_embed(target)], axis=1)
        return self.head2(relu(self.head1(x)))

    def window_logits(self, window, target: int) -> Tensor:
        """Run a full observation window through a fresh sequence."""
        seq = self.new_sequence()
        adjacency = self.encoder.graph.adjacency()
        for obs in window[:-1]:
            z, _, _ = self.encoder.graph.encode(adjacency, obs)
            seq.push(z)
        return self.action_logits(seq, window[-1], target)


@dataclass
class PolicyState:
    h: Tensor
    c: Tensor
    prev_action: int | None = None


class PolicyModel(Module):
    """Encoder, target conditioning, LSTM core, and actor/critic heads."""

    def __init__(self, cfg: RunConfig, rng: np.random.Generator | None = None):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        rng = rng or np.random.default_rng(cfg.seed)
        self.encoder = self.child("encoder", VisualEncoder(cfg, rng))
        self.target_embed = self.child("target_embed", _TargetEmbedding(cfg, rng))
        d_in = cfg.global_width + cfg.target_width + N_ACTIONS
        d_h = cfg.hidden_width
        self.w_ih = self.param("lstm_w_ih", rng.normal(0, 1.0 / np.sqrt(d_in), (d_in, 4 * d_h)))
        self.w_hh = self.param("lstm_w_hh", rng.normal(0, 1.0 / np.sqrt(d_h), (d_h, 4 * d_h)))
        self.bias = self.param("lstm_b", np.zeros(4 * d_h))
        # near-uniform initial policy and near-zero initial values
        self.actor = self.child("actor", Linear(d_h, N_ACTIONS, rng, gain=0.05))
        self.critic = self.child("critic", Linear(d_h, 1, rng, gain=0.05))

    def new_sequence(self) -> GraphSequence:
        return GraphSequence(self.cfg.seq_len)

    def initial_state(self) -> PolicyState:
        d_h = self.cfg.hidden_width
        return PolicyState(Tensor(np.zeros((1, d_h))), Tensor(np.zeros((1, d_h))), None)

    def forward(self, seq: GraphSequence, obs, target: int, state: PolicyState):
        """Returns (logits [1×6], value scalar Tensor, next PolicyState)."""
        features = self.encoder(seq, obs)
        prev = (
            _onehot_row(state.prev_action, N_ACTIONS)
            if state.prev_action is not None
            else Tensor(np.zeros((1, N_ACTIONS)))
        )
        x = concat([features, self.target_embed(target), prev], axis=1)
        h, c = lstm_cell(x, state.h, state.c, self.w_ih, self.w_hh, self.bias)
        logits = self.actor(h)
        value = reshape(self.critic(h), ())
        return logits, value, PolicyState(h, c, state.prev_action)
