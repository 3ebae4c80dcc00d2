"""Command-line entry point: gen-scenes, pretrain, train, eval.

All outputs land under --out-dir. The CRGTSR_SEED environment variable
overrides the config seed. Exit codes: 0 success, 1 runtime failure
(corrupt checkpoint, incompatible hash), 2 usage/config errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, config_hash, load_config_file, serialize_config
from .env import Scene, generate_scene
from .evaluate import (
    ExpertAgent,
    ModelAgent,
    RandomAgent,
    format_report,
    report_rows,
    run_eval,
    split_report,
    REPORT_HEADER,
)
from .model import PolicyModel, PretrainModel
from .optim import Adam
from .policy import A3CTrainer, ParameterStore
from .pretrain import (
    ImitationTrainer,
    TrajectoryDataset,
    accuracy,
    generate_dataset,
    split_dataset,
    transfer_weights,
)


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _load_config(path) -> RunConfig:
    if not os.path.exists(path):
        raise CliError(f"config file not found: {path}", code=2)
    try:
        return load_config_file(path)
    except ConfigError as exc:
        raise CliError(f"bad config: {exc}", code=2) from exc


def build_scenes(cfg: RunConfig):
    return [
        generate_scene(
            seed=cfg.seed * 10_000 + i,
            rows=cfg.grid_rows,
            cols=cfg.grid_cols,
            obstacle_density=cfg.obstacle_density,
            object_count=cfg.object_count,
        )
        for i in range(cfg.scene_count)
    ]


def load_scene_dir(path):
    if not os.path.isdir(path):
        raise CliError(f"scene directory not found: {path}", code=2)
    files = sorted(f for f in os.listdir(path) if f.endswith(".txt"))
    if not files:
        raise CliError(f"no scene files (*.txt) in {path}", code=2)
    return [Scene.load(os.path.join(path, f)) for f in files]


def _scenes_for(args, cfg: RunConfig):
    if getattr(args, "scenes", None):
        return load_scene_dir(args.scenes)
    return build_scenes(cfg)


def _out_path(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def cmd_gen_scenes(args) -> int:
    cfg = _load_config(args.config)
    scenes = build_scenes(cfg)
    for i, scene in enumerate(scenes):
        scene.save(_out_path(args, f"scene_{i:03d}.txt"))
    with open(_out_path(args, "config_used.cfg"), "w") as fh:
        fh.write(serialize_config(cfg))
    print(f"wrote {len(scenes)} scenes to {args.out_dir}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args.config)
    if args.episodes is not None:
        if args.episodes <= 0:
            raise CliError(f"--episodes must be positive, got {args.episodes}", code=2)
        episodes = args.episodes
    else:
        episodes = 300
    if args.epochs <= 0:
        raise CliError(f"--epochs must be positive, got {args.epochs}", code=2)
    scenes = _scenes_for(args, cfg)
    cache = _out_path(args, f"dataset_{args.dataset_policy}_{episodes}_{cfg.seed}.bin")
    if os.path.exists(cache):
        dataset = TrajectoryDataset.load(cache, cfg.seq_len)
        print(f"loaded cached dataset: {len(dataset)} windows from {cache}")
    else:
        dataset = generate_dataset(scenes, episodes, args.dataset_policy, cfg.seed,
                                   cfg.seq_len, max_steps=cfg.max_episode_len)
        dataset.save(cache)
        print(f"generated dataset: {len(dataset)} windows -> {cache}")
    train, held = split_dataset(dataset, 0.1, cfg.seed)
    model = PretrainModel(cfg)
    trainer = ImitationTrainer(model, lr=args.lr if args.lr is not None else cfg.pretrain_lr)
    rng = np.random.default_rng([cfg.seed, 23])
    log_path = _out_path(args, "pretrain_log.csv")
    with open(log_path, "w") as log:
        log.write("epoch,mean_loss,holdout_accuracy\n")
        for epoch in range(args.epochs):
            loss = trainer.run_epoch(train, cfg.batch_size, rng)
            acc = accuracy(model, held) if len(held) else float("nan")
            log.write(f"{epoch},{loss:.6f},{acc:.6f}\n")
            print(f"epoch {epoch}: loss {loss:.4f}, held-out accuracy {acc:.3f}")
    ckpt_path = args.out if args.out else _out_path(args, "pretrain.ckpt")
    save_checkpoint(ckpt_path, model.state(), config_hash(cfg))
    print(f"checkpoint -> {ckpt_path}")
    return 0


def _init_store(cfg: RunConfig, init_path) -> ParameterStore:
    template = PolicyModel(cfg, np.random.default_rng([cfg.seed, 999]))
    params = template.parameters()
    optimizer = Adam(params, lr=cfg.rl_lr)
    version = 0
    if init_path:
        data = load_checkpoint(init_path)
        expected = config_hash(cfg)
        if data.config_hash != expected:
            raise CliError(
                f"checkpoint {init_path} is incompatible: its config hash is "
                f"{data.config_hash}, this config hashes to {expected}",
            )
        if set(data.params) == set(params):
            template.load_state(data.params)
            version = data.store_version
            if data.has_optimizer:
                optimizer.load_state_arrays(data.optimizer_arrays, data.optimizer_step)
            print(f"resumed policy checkpoint {init_path} (store version {version})")
        else:
            encoder_keys = {k: v for k, v in data.params.items() if k.startswith("encoder.")}
            if not encoder_keys:
                raise CliError(f"checkpoint {init_path} has no usable parameters for the policy model")
            template.load_state(encoder_keys)
            print(f"transferred {len(encoder_keys)} representation tensors from {init_path}")
    return ParameterStore(params, optimizer, version=version)


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    episodes = args.episodes if args.episodes is not None else cfg.episode_budget
    if episodes <= 0:
        raise CliError(f"--episodes must be positive, got {episodes}", code=2)
    cfg.validate()
    scenes = _scenes_for(args, cfg)
    store = _init_store(cfg, args.init)
    stats_path = _out_path(args, "train_stats.csv")
    trainer = A3CTrainer(cfg, scenes, store=store, stats_path=stats_path)
    ckpt_path = args.out if args.out else _out_path(args, "policy.ckpt")

    def checkpoint_now():
        save_checkpoint(
            ckpt_path, store.snapshot(), config_hash(cfg), store_version=store.version,
            optimizer_step=store.optimizer.t, optimizer_arrays=store.optimizer.state_arrays(),
        )

    remaining = episodes
    interval = max(1, cfg.checkpoint_interval)
    try:
        while remaining > 0:
            chunk = min(interval, remaining)
            done = trainer.run(chunk)
            remaining -= chunk
            checkpoint_now()
            if done:
                rate = sum(s.success for s in done) / len(done)
                print(f"episodes {trainer.episodes_completed}: chunk success rate {rate:.3f}")
    finally:
        trainer.close()
    print(f"stats -> {stats_path}")
    print(f"checkpoint -> {ckpt_path} (store version {store.version})")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    if args.runs <= 0:
        raise CliError(f"--runs must be positive, got {args.runs}", code=2)
    if args.episodes_per_scene <= 0:
        raise CliError(f"--episodes-per-scene must be positive, got {args.episodes_per_scene}", code=2)
    scenes = _scenes_for(args, cfg)
    if args.expert_oracle:
        agent = ExpertAgent()
        label = "expert-oracle"
    elif args.random_policy:
        agent = RandomAgent(cfg.seed)
        label = "random-policy"
    else:
        if not args.checkpoint:
            raise CliError("eval needs --checkpoint (or --expert-oracle / --random-policy)", code=2)
        data = load_checkpoint(args.checkpoint)
        expected = config_hash(cfg)
        if data.config_hash != expected:
            raise CliError(
                f"checkpoint {args.checkpoint} is incompatible: its config hash is "
                f"{data.config_hash}, this config hashes to {expected}",
            )
        model = PolicyModel(cfg)
        try:
            model.load_state(data.params)
        except (KeyError, ValueError) as exc:
            raise CliError(f"checkpoint does not fit the policy model: {exc}") from exc
        agent = ModelAgent(model, greedy=True)
        label = args.checkpoint
    runs = []
    episodes_path = _out_path(args, "eval_episodes.csv")
    with open(episodes_path, "w") as fh:
        fh.write("run,scene,target,seed,success,path_length,optimal_length\n")
        for run_idx in range(args.runs):
            results = run_eval(agent, scenes, args.episodes_per_scene, seed=cfg.seed + run_idx,
                               max_steps=cfg.max_episode_len)
            runs.append(results)
            for r in results:
                fh.write(f"{run_idx},{r.scene_id},{r.target},{r.seed},{r.success},"
                         f"{r.path_length},{r.optimal_length}\n")
    report = split_report(runs)
    report_path = _out_path(args, "eval_report.csv")
    with open(report_path, "w") as fh:
        fh.write(REPORT_HEADER + "\n")
        for row in report_rows(report):
            fh.write(row + "\n")
    print(f"evaluated {label} on {len(scenes)} scenes x {args.episodes_per_scene} episodes x {args.runs} runs")
    print(format_report(report))
    print(f"per-episode rows -> {episodes_path}")
    print(f"report -> {report_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crgtsr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--out-dir", required=True, help="directory for all outputs")
        p.add_argument("--scenes", help="directory of scene_*.txt files (default: generate from config)")

    p = sub.add_parser("gen-scenes", help="generate scene files from the config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("pretrain", help="expert-imitation pre-training")
    common(p)
    p.add_argument("--dataset-policy", choices=("expert", "random"), default="expert")
    p.add_argument("--episodes", type=int, default=None, help="rollout episodes for the dataset")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=None, help="override the config pretrain learning rate")
    p.add_argument("--out", help="checkpoint path (default <out-dir>/pretrain.ckpt)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="asynchronous actor-critic training")
    common(p)
    p.add_argument("--init", help="initial checkpoint (pretrain transfer or policy resume)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--out", help="checkpoint path (default <out-dir>/policy.ckpt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation with SR/SPL report")
    common(p)
    p.add_argument("--checkpoint", help="policy checkpoint to evaluate")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--episodes-per-scene", type=int, default=10)
    p.add_argument("--expert-oracle", action="store_true", help="evaluate the shortest-path expert")
    p.add_argument("--random-policy", action="store_true", help="evaluate a uniform random policy")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
