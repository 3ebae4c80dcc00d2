"""Expert-trajectory datasets and supervised imitation pre-training.

Rollouts are driven by the expert or by a uniform random policy; labels
always come from the shortest-path expert at the pose where the window
ends. Windows slide with stride 1 and are padded at the rollout start by
repeating the first observation, matching the graph sequence padding.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .env import (
    GridEnv,
    OBS_FLOATS,
    Scene,
    ShortestPathOracle,
    deserialize_observation,
    serialize_observation,
)
from .model import N_ACTIONS, PolicyModel, PretrainModel
from .optim import Adam
from .tensor import Tensor, backward, cross_entropy, no_grad

__all__ = [
    "TrajectoryRecord",
    "TrajectoryDataset",
    "generate_dataset",
    "split_dataset",
    "ImitationTrainer",
    "accuracy",
    "majority_baseline",
    "transfer_weights",
    "DATASET_MAGIC",
]

DATASET_MAGIC = b"CRGTSR-DS"
DATASET_VERSION = 1


@dataclass(frozen=True)
class TrajectoryRecord:
    scene_id: int
    target: int
    observations: tuple          # length-L window, oldest first, pad-repeated
    label: int
    pose: tuple = ()             # (row, col, rotation, horizon); not persisted


class TrajectoryDataset:
    def __init__(self, records, seq_len: int):
        self.records = list(records)
        self.seq_len = seq_len

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i) -> TrajectoryRecord:
        return self.records[i]

    def save(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(DATASET_MAGIC)
            fh.write(struct.pack("<II", DATASET_VERSION, len(self.records)))
            for rec in self.records:
                fh.write(struct.pack("<IHB", rec.scene_id, rec.target, rec.label))
                for obs in rec.observations:
                    fh.write(serialize_observation(obs).tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path, seq_len: int) -> "TrajectoryDataset":
        with open(path, "rb") as fh:
            blob = fh.read()
        if not blob.startswith(DATASET_MAGIC):
            raise ValueError(f"{path}: not a trajectory dataset (bad magic)")
        off = len(DATASET_MAGIC)
        version, count = struct.unpack_from("<II", blob, off)
        off += 8
        if version != DATASET_VERSION:
            raise ValueError(f"{path}: unsupported dataset version {version}")
        obs_bytes = OBS_FLOATS * 4
        record_bytes = 7 + seq_len * obs_bytes
        if len(blob) - off != count * record_bytes:
            raise ValueError(
                f"{path}: {len(blob) - off} payload bytes do not match "
                f"{count} records of {record_bytes} bytes (sequence length {seq_len}?)"
            )
        records = []
        for _ in range(count):
            scene_id, target, label = struct.unpack_from("<IHB", blob, off)
            off += 7
            window = []
            for _ in range(seq_len):
                buf = np.frombuffer(blob, dtype="<f4", count=OBS_FLOATS, offset=off)
                window.append(deserialize_observation(buf))
                off += obs_bytes
            records.append(TrajectoryRecord(scene_id, target, tuple(window), label))
        return cls(records, seq_len)


def generate_dataset(scenes, n_episodes: int, policy: str, seed: int, seq_len: int,
                     max_steps: int = 50) -> TrajectoryDataset:
    """Roll out episodes and label every visited pose with the expert action."""
    if n_episodes <= 0:
        raise ValueError("n_episodes must be positive")
    if policy not in ("expert", "random"):
        raise ValueError(f"unknown rollout policy {policy!r}")
    rng = np.random.default_rng([seed, 7])
    oracles = [ShortestPathOracle(scene) for scene in scenes]
    records = []
    for _ in range(n_episodes):
        scene_id = int(rng.integers(len(scenes)))
        scene = scenes[scene_id]
        oracle = oracles[scene_id]
        cats = scene.categories_present()
        target = cats[int(rng.integers(len(cats)))]
        env = GridEnv(scene, max_steps=max_steps)
        state, obs = env.reset(target, int(rng.integers(2**31)))
        history = [obs]
        done = False
        while not done:
            label = oracle.expert_action(env.state, target)
            window = history[-seq_len:]
            window = [window[0]] * (seq_len - len(window)) + window
            pose = (env.state.row, env.state.col, env.state.rotation, env.state.horizon)
            records.append(TrajectoryRecord(scene_id, target, tuple(window), label, pose))
            action = label if policy == "expert" else int(rng.integers(N_ACTIONS))
            _, obs, _, done, _ = env.step(action)
            history.append(obs)
    return TrajectoryDataset(records, seq_len)


def split_dataset(dataset: TrajectoryDataset, holdout_fraction: float, seed: int):
    """Deterministic shuffled train/held-out split."""
    rng = np.random.default_rng([seed, 19])
    order = rng.permutation(len(dataset.records))
    n_hold = int(round(holdout_fraction * len(order)))
    held = [dataset.records[i] for i in order[:n_hold]]
    train = [dataset.records[i] for i in order[n_hold:]]
    return TrajectoryDataset(train, dataset.seq_len), TrajectoryDataset(held, dataset.seq_len)


class ImitationTrainer:
    """Shuffled-batch cross-entropy training with per-epoch learning-rate
    decay."""

    def __init__(self, model: PretrainModel, lr: float | None = None, decay: float | None = None):
        self.model = model
        cfg = model.cfg
        self.optimizer = Adam(model.parameters(), lr=lr if lr is not None else cfg.pretrain_lr)
        self.decay = decay if decay is not None else cfg.pretrain_lr_decay
        self.epochs_done = 0

    def run_epoch(self, dataset: TrajectoryDataset, batch_size: int, rng) -> float:
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        order = rng.permutation(len(dataset))
        total_loss = 0.0
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            self.model.zero_grads()
            loss = None
            for idx in batch:
                rec = dataset[int(idx)]
                logits = self.model.window_logits(rec.observations, rec.target)
                term = cross_entropy(logits, rec.label)
                loss = term if loss is None else loss + term
            loss = loss * (1.0 / len(batch))
            backward(loss)
            self.optimizer.step()
            total_loss += loss.item() * len(batch)
        self.epochs_done += 1
        self.optimizer.lr *= self.decay
        return total_loss / len(order)


def mean_loss(model: PretrainModel, dataset: TrajectoryDataset) -> float:
    total = 0.0
    with no_grad():
        for rec in dataset.records:
            logits = model.window_logits(rec.observations, rec.target)
            total += cross_entropy(logits, rec.label).item()
    return total / len(dataset)


def accuracy(model: PretrainModel, dataset: TrajectoryDataset) -> float:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    hits = 0
    with no_grad():
        for rec in dataset.records:
            logits = model.window_logits(rec.observations, rec.target)
            hits += int(np.argmax(logits.data[0])) == rec.label
    return hits / len(dataset)


def majority_baseline(train: TrajectoryDataset, held: TrajectoryDataset) -> float:
    """Held-out accuracy of always predicting the training majority class."""
    counts = np.zeros(N_ACTIONS, dtype=int)
    for rec in train.records:
        counts[rec.label] += 1
    majority = int(np.argmax(counts))
    return sum(rec.label == majority for rec in held.records) / len(held.records)


def transfer_weights(pretrained: PretrainModel, policy: PolicyModel) -> None:
    """Copy the shared representation stack; the imitation head is dropped and
    the LSTM/actor/critic keep their fresh initialization."""
    source = pretrained.encoder.state()
    try:
        policy.encoder.load_state(source)
    except (KeyError, ValueError) as exc:
        raise ValueError(f"encoder transfer failed: {exc}") from exc
