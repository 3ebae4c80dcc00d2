"""Evaluation: greedy episode runner, SR/SPL, and the split report with
mean/variance over repeated runs."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .env import GridEnv, Scene, ShortestPathOracle
from .model import N_ACTIONS, PolicyModel
from .tensor import no_grad

__all__ = [
    "EpisodeResult",
    "ModelAgent",
    "RandomAgent",
    "ExpertAgent",
    "run_eval",
    "success_rate",
    "spl",
    "split_report",
    "report_rows",
    "format_report",
    "REPORT_HEADER",
    "episode_cap",
]

REPORT_HEADER = "split,metric,mean,variance,n_runs,n_episodes"
LONG_SPLIT = "L_opt>=5"


@dataclass(frozen=True)
class EpisodeResult:
    success: int
    path_length: int
    optimal_length: int
    target: int
    scene_id: int
    seed: int

    def spl_term(self) -> float:
        return self.success * self.optimal_length / max(self.path_length, self.optimal_length)


def episode_cap(scene: Scene) -> int:
    """Larger rooms get the longer evaluation budget."""
    return 100 if max(scene.rows, scene.cols) > 10 else 50


# -- agents -------------------------------------------------------------------


class ModelAgent:
    """Greedy (or sampled) policy wrapper holding per-episode state."""

    def __init__(self, model: PolicyModel, greedy: bool = True, rng=None):
        self.model = model
        self.greedy = greedy
        self.rng = rng
        self.seq = None
        self.state = None
        self.target = None

    def reset(self, env: GridEnv, target: int) -> None:
        self.seq = self.model.new_sequence()
        self.state = self.model.initial_state()
        self.target = target

    def act(self, obs) -> int:
        with no_grad():
            logits, _, next_state = self.model.forward(self.seq, obs, self.target, self.state)
        if self.greedy:
            action = int(np.argmax(logits.data[0]))
        else:
            z = logits.data[0] - logits.data[0].max()
            p = np.exp(z)
            p /= p.sum()
            action = int(self.rng.choice(N_ACTIONS, p=p))
        next_state.prev_action = action
        self.state = next_state
        return action


class RandomAgent:
    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def reset(self, env: GridEnv, target: int) -> None:
        pass

    def act(self, obs) -> int:
        return int(self.rng.integers(N_ACTIONS))


class ExpertAgent:
    """Shortest-path oracle as a policy; SR and SPL are exactly 1."""

    def __init__(self):
        self._oracles: dict[int, ShortestPathOracle] = {}
        self._env = None
        self._target = None

    def reset(self, env: GridEnv, target: int) -> None:
        self._env = env
        self._target = target
        key = id(env.scene)
        if key not in self._oracles:
            self._oracles[key] = ShortestPathOracle(env.scene)
        self._oracle = self._oracles[key]

    def act(self, obs) -> int:
        return self._oracle.expert_action(self._env.state, self._target)


# -- episode runner -------------------------------------------------------------


def run_eval(agent, scenes, episodes_per_scene: int, seed: int, max_steps: int | None = None):
    """Deterministic evaluation sweep; per-episode optimal length computed at
    the start pose."""
    rng = np.random.default_rng([seed, 101])
    results: list[EpisodeResult] = []
    for scene_id, scene in enumerate(scenes):
        oracle = ShortestPathOracle(scene)
        cap = max_steps if max_steps is not None else episode_cap(scene)
        env = GridEnv(scene, max_steps=cap)
        cats = scene.categories_present()
        for _ in range(episodes_per_scene):
            target = cats[int(rng.integers(len(cats)))]
            episode_seed = int(rng.integers(2**31))
            state, obs = env.reset(target, episode_seed)
            optimal = oracle.optimal_path_length(state, target)
            agent.reset(env, target)
            done = False
            success = False
            while not done:
                _, obs, _, done, success = env.step(agent.act(obs))
            steps = env.state.steps_taken
            if success:
                assert steps >= optimal, "agent beat the exact optimum"
            results.append(EpisodeResult(int(success), steps, optimal, target, scene_id, episode_seed))
    return results


# -- metrics ----------------------------------------------------------------------


def success_rate(results) -> float:
    if not results:
        raise ValueError("empty result list")
    return sum(r.success for r in results) / len(results)


def spl(results) -> float:
    if not results:
        raise ValueError("empty result list")
    for r in results:
        if r.path_length < 1 or r.optimal_length < 1:
            raise ValueError(f"nonpositive lengths in {r}")
    return sum(r.spl_term() for r in results) / len(results)


def _population_variance(values) -> float:
    m = sum(values) / len(values)
    return sum((v - m) ** 2 for v in values) / len(values)


def split_report(runs) -> dict:
    """Per-split SR/SPL mean and population variance over repeated runs.

    runs: list of per-run result lists. Splits with no episodes report None
    metrics; with fewer than two contributing runs the variance is omitted
    (None) with a warning.
    """
    runs = [list(r) for r in runs]
    if not runs:
        raise ValueError("no runs supplied")
    report: dict = {}
    for split_name, keep in (("ALL", lambda r: True), (LONG_SPLIT, lambda r: r.optimal_length >= 5)):
        subsets = [[r for r in run if keep(r)] for run in runs]
        contributing = [s for s in subsets if s]
        n_episodes = sum(len(s) for s in subsets)
        entry = {"n_runs": len(contributing), "n_episodes": n_episodes}
        if not contributing:
            entry["SR"] = {"mean": None, "variance": None}
            entry["SPL"] = {"mean": None, "variance": None}
        else:
            for metric_name, fn in (("SR", success_rate), ("SPL", spl)):
                values = [fn(s) for s in contributing]
                mean = sum(values) / len(values)
                if len(values) >= 2:
                    variance = _population_variance(values)
                else:
                    warnings.warn(f"{split_name}/{metric_name}: variance omitted with fewer than 2 runs")
                    variance = None
                entry[metric_name] = {"mean": mean, "variance": variance}
        report[split_name] = entry
    return report


def report_rows(report: dict):
    """CSV rows matching REPORT_HEADER."""
    rows = []
    for split_name, entry in report.items():
        for metric in ("SR", "SPL"):
            cell = entry[metric]
            mean = "" if cell["mean"] is None else f"{cell['mean']:.6f}"
            var = "" if cell["variance"] is None else f"{cell['variance']:.6f}"
            rows.append(f"{split_name},{metric},{mean},{var},{entry['n_runs']},{entry['n_episodes']}")
    return rows


def format_report(report: dict) -> str:
    lines = [f"{'split':<10} {'metric':<7} {'mean':>10} {'variance':>10} {'runs':>5} {'episodes':>9}"]
    for split_name, entry in report.items():
        for metric in ("SR", "SPL"):
            cell = entry[metric]
            mean = "undefined" if cell["mean"] is None else f"{cell['mean']:.4f}"
            var = "-" if cell["variance"] is None else f"{cell['variance']:.5f}"
            lines.append(f"{split_name:<10} {metric:<7} {mean:>10} {var:>10} {entry['n_runs']:>5} {entry['n_episodes']:>9}")
    return "\n".join(lines)
