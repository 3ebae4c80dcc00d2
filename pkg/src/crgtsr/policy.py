"""Actor-critic training: discounted returns, the A3C objective, the shared
parameter store, and resumable asynchronous workers.

Workers snapshot the store, roll out up to the update horizon (or episode
end), backpropagate the combined loss through the rollout segment, and
submit the whole gradient for one atomic clipped Adam step. Episodes span
update cycles: the LSTM state and the graph sequence are detached at each
cycle boundary and carried forward.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .env import GridEnv, Scene, ShortestPathOracle
from .model import N_ACTIONS, PolicyModel, PolicyState
from .optim import Adam, clip_gradients
from .tensor import Tensor, backward, exp as texp, log_softmax, no_grad, tsum

__all__ = [
    "Transition",
    "discounted_returns",
    "a3c_loss",
    "ParameterStore",
    "A3CTrainer",
    "EpisodeStats",
    "STATS_HEADER",
    "GRAD_CLIP_NORM",
]

GRAD_CLIP_NORM = 40.0
STATS_HEADER = "episode,worker,target,steps,reward,success,spl_term"


@dataclass
class Transition:
    features: Tensor
    action: int
    log_prob: Tensor
    value: Tensor
    entropy: Tensor
    reward: float
    done: bool


def discounted_returns(rewards, gamma: float, bootstrap: float = 0.0) -> list:
    """R_t = r_t + gamma * R_{t+1}, seeded with the bootstrap value."""
    if not rewards:
        raise ValueError("empty reward list")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    out = [0.0] * len(rewards)
    acc = float(bootstrap)
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def a3c_loss(transitions, returns, entropy_weight: float = 0.01, value_coef: float = 0.5,
             advantages=None) -> Tensor:
    """Policy term with detached advantage, half squared value error, minus
    the entropy bonus.

    Advantages default to return minus the detached value estimate; they are
    plain floats, so no policy gradient leaks into the critic.
    """
    if len(transitions) != len(returns):
        raise ValueError(f"{len(transitions)} transitions vs {len(returns)} returns")
    if advantages is None:
        advantages = [ret - tr.value.item() for tr, ret in zip(transitions, returns)]
    elif len(advantages) != len(transitions):
        raise ValueError(f"{len(transitions)} transitions vs {len(advantages)} advantages")
    total = Tensor(np.asarray(0.0))
    for tr, ret, advantage in zip(transitions, returns, advantages):
        total = total + tr.log_prob * (-advantage)
        diff = tr.value * (-1.0) + ret
        total = total + (diff * diff) * value_coef
        total = total + tr.entropy * (-entropy_weight)
    return total


class ParameterStore:
    """The single shared object between workers: master parameters plus the
    optimizer, updated atomically per submitted gradient."""

    def __init__(self, params: dict, optimizer=None, clip_norm: float = GRAD_CLIP_NORM, version: int = 0):
        self._params = dict(params)
        self.optimizer = optimizer if optimizer is not None else Adam(self._params)
        self.clip_norm = clip_norm
        self._version = version
        self._lock = threading.Lock()

    @property
    def version(self) -> int:
        with self._lock:
            return self._version

    def parameter_names(self):
        return sorted(self._params)

    def snapshot(self) -> dict:
        with self._lock:
            return {name: p.data.copy() for name, p in self._params.items()}

    def snapshot_into(self, targets: dict) -> int:
        """Copy master values into a worker's local tensors; returns version."""
        with self._lock:
            for name, local in targets.items():
                master = self._params.get(name)
                if master is None:
                    raise KeyError(f"store has no parameter {name!r}")
                local.data[...] = master.data
            return self._version

    def apply_gradients(self, grads: dict) -> int:
        """Set gradients, clip the global norm, take one optimizer step."""
        with self._lock:
            missing = set(self._params) - set(grads)
            if missing:
                raise ValueError(f"gradient missing for parameters: {sorted(missing)[:3]}")
            for name, g in grads.items():
                p = self._params.get(name)
                if p is None:
                    raise KeyError(f"store has no parameter {name!r}")
                if g.shape != p.data.shape:
                    raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}")
                p.grad = np.asarray(g, dtype=np.float64)
            clip_gradients(self._params, self.clip_norm)
            self.optimizer.step()
            self._version += 1
            return self._version


@dataclass
class EpisodeStats:
    episode: int
    worker: int
    target: int
    steps: int
    reward: float
    success: bool
    spl_term: float

    def csv_row(self) -> str:
        return (f"{self.episode},{self.worker},{self.target},{self.steps},"
                f"{self.reward:.4f},{int(self.success)},{self.spl_term:.6f}")


def policy_outputs(model: PolicyModel, seq, obs, target: int, state: PolicyState):
    """One policy step: logits, value, next state, and the action distribution
    pieces needed for the loss."""
    logits, value, next_state = model.forward(seq, obs, target, state)
    logp = log_softmax(logits, axis=1)
    probs = np.exp(logp.data[0])
    probs /= probs.sum()
    entropy = tsum(texp(logp) * logp) * (-1.0)
    return logits, value, next_state, logp, probs, entropy


class _Worker:
    def __init__(self, wid: int, cfg: RunConfig, store: ParameterStore, scenes, trainer):
        self.wid = wid
        self.cfg = cfg
        self.store = store
        self.scenes = scenes
        self.trainer = trainer
        self.model = PolicyModel(cfg, np.random.default_rng([cfg.seed, wid, 11]))
        self.params = self.model.parameters()
        self.action_rng = np.random.default_rng([cfg.seed, wid, 13])
        self.episode_rng = np.random.default_rng([cfg.seed, wid, 17])
        self.oracles = {}
        self.env: GridEnv | None = None
        self.seq = None
        self.policy_state: PolicyState | None = None
        self.episode_number = -1
        self.episode_reward = 0.0
        self.obs = None
        self.target = -1
        self.optimal_length = 0
        self.consecutive_faults = 0

    def _oracle(self, scene_index: int) -> ShortestPathOracle:
        if scene_index not in self.oracles:
            self.oracles[scene_index] = ShortestPathOracle(self.scenes[scene_index])
        return self.oracles[scene_index]

    def _begin_episode(self) -> bool:
        number = self.trainer.claim_episode()
        if number is None:
            return False
        scene_index = int(self.episode_rng.integers(len(self.scenes)))
        scene = self.scenes[scene_index]
        cats = scene.categories_present()
        self.target = cats[int(self.episode_rng.integers(len(cats)))]
        env_seed = int(self.episode_rng.integers(2**31))
        self.env = GridEnv(scene, max_steps=self.cfg.max_episode_len)
        state, self.obs = self.env.reset(self.target, env_seed)
        self.optimal_length = self._oracle(scene_index).optimal_path_length(state, self.target)
        self.seq = self.model.new_sequence()
        self.policy_state = self.model.initial_state()
        self.episode_number = number
        self.episode_reward = 0.0
        return True

    def _finish_episode(self, success: bool) -> None:
        steps = self.env.state.steps_taken
        spl_term = float(success) * self.optimal_length / max(steps, self.optimal_length)
        self.trainer.emit_stats(EpisodeStats(
            self.episode_number, self.wid, self.target, steps,
            self.episode_reward, success, spl_term,
        ))
        self.env = None

    def run_cycle(self) -> bool:
        """One snapshot / rollout / update cycle; False when the budget is
        exhausted and no episode is in flight."""
        self.store.snapshot_into(self.params)
        if self.env is None and not self._begin_episode():
            return False
        transitions = []
        done = False
        success = False
        for _ in range(self.cfg.rollout_horizon):
            _, value, next_state, logp, probs, entropy = policy_outputs(
                self.model, self.seq, self.obs, self.target, self.policy_state)
            action = int(self.action_rng.choice(N_ACTIONS, p=probs))
            log_prob = tsum(logp * Tensor(np.eye(N_ACTIONS)[action:action + 1]))
            next_state.prev_action = action
            _, self.obs, reward, done, success = self.env.step(action)
            self.policy_state = next_state
            self.episode_reward += reward
            transitions.append(Transition(None, action, log_prob, value, entropy, reward, done))
            if done:
                break
        if done:
            bootstrap = 0.0
        else:
            with no_grad():
                clone = self._clone_sequence()
                _, value, _, _, _, _ = policy_outputs(
                    self.model, clone, self.obs, self.target, self.policy_state)
            bootstrap = value.item()
        returns = discounted_returns([t.reward for t in transitions], self.cfg.gamma, bootstrap)
        loss = a3c_loss(transitions, returns, self.cfg.entropy_weight, self.cfg.value_coef)
        self.model.zero_grads()
        backward(loss)
        grads = {
            name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in self.params.items()
        }
        self.store.apply_gradients(grads)
        self.model.zero_grads()
        # cut the graph at the cycle boundary
        self.policy_state = PolicyState(
            self.policy_state.h.detach(), self.policy_state.c.detach(), self.policy_state.prev_action)
        self.seq.detach_all()
        if done:
            self._finish_episode(success)
        return True

    def _clone_sequence(self):
        from .graph import GraphSequence

        clone = GraphSequence(self.seq.length)
        for z in self.seq.tensors():
            clone.push(z)
        return clone


class A3CTrainer:
    """Owns the store, the workers, the episode budget, and the stats stream.

    run() is resumable: calling it again continues with the same worker
    state, so training can alternate with evaluation.
    """

    def __init__(self, cfg: RunConfig, scenes, store: ParameterStore | None = None, stats_path=None):
        cfg.validate()
        if not scenes:
            raise ValueError("no scenes supplied")
        self.cfg = cfg
        self.scenes = list(scenes)
        if store is None:
            template = PolicyModel(cfg, np.random.default_rng([cfg.seed, 999]))
            store = ParameterStore(template.parameters(), Adam(template.parameters(), lr=cfg.rl_lr))
        self.store = store
        self.workers = [_Worker(w, cfg, store, self.scenes, self) for w in range(cfg.workers)]
        self.stats: list[EpisodeStats] = []
        self.faults: list[tuple] = []
        self._stats_lock = threading.Lock()
        self._budget_lock = threading.Lock()
        self._next_episode = 0
        self._episode_limit = 0
        self._stats_path = stats_path
        self._stats_fh = None

    def claim_episode(self):
        with self._budget_lock:
            if self._next_episode >= self._episode_limit:
                return None
            number = self._next_episode
            self._next_episode += 1
            return number

    def emit_stats(self, stats: EpisodeStats) -> None:
        with self._stats_lock:
            self.stats.append(stats)
            if self._stats_fh is not None:
                self._stats_fh.write(stats.csv_row() + "\n")
                self._stats_fh.flush()

    @property
    def episodes_completed(self) -> int:
        return len(self.stats)

    def _safe_cycle(self, worker: _Worker) -> bool:
        """A fault aborts only that worker's current episode; persistent
        faults (likely a real bug, not a flaky environment) re-raise."""
        try:
            alive = worker.run_cycle()
            worker.consecutive_faults = 0
            return alive
        except Exception as exc:
            worker.env = None
            worker.consecutive_faults += 1
            self.faults.append((worker.wid, repr(exc)))
            if worker.consecutive_faults > 5:
                raise
            return True

    def run(self, episodes: int) -> list:
        """Train for an additional number of episodes; returns their stats."""
        start = len(self.stats)
        with self._budget_lock:
            self._episode_limit = self._next_episode + episodes
        if self._stats_path is not None and self._stats_fh is None:
            self._stats_fh = open(self._stats_path, "w")
            self._stats_fh.write(STATS_HEADER + "\n")
        try:
            if len(self.workers) == 1:
                while self._safe_cycle(self.workers[0]):
                    pass
            else:
                def loop(worker):
                    while self._safe_cycle(worker):
                        pass

                threads = [threading.Thread(target=loop, args=(w,), daemon=True) for w in self.workers]
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
        finally:
            if self._stats_fh is not None:
                self._stats_fh.flush()
        return self.stats[start:]

    def close(self) -> None:
        if self._stats_fh is not None:
            self._stats_fh.close()
            self._stats_fh = None
