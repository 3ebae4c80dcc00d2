"""End-to-end command-line tests on a miniature configuration."""

import os

import numpy as np
import pytest

from crgtsr.checkpoint import load_checkpoint
from crgtsr.cli import main
from crgtsr.config import config_hash, parse_config

TINY_CONFIG = """
seed=5
grid_rows=6
grid_cols=6
obstacle_density=0.12
object_count=5
scene_count=2
heads=2
layers=1
dict_width=6
appearance_width=5
feature_width=8
global_width=8
hidden_width=12
target_width=4
rollout_horizon=8
max_episode_len=15
checkpoint_interval=2
workers=1
rl_lr=0.001
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG)
    return str(path)


def test_missing_config_exit_2(tmp_path, capsys):
    code = main(["pretrain", "--config", str(tmp_path / "nope.cfg"), "--out-dir", str(tmp_path)])
    assert code == 2
    assert "nope.cfg" in capsys.readouterr().err


def test_zero_episodes_rejected_before_work(cfg_path, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["pretrain", "--config", cfg_path, "--out-dir", str(out), "--episodes", "0"])
    assert code == 2
    assert "--episodes" in capsys.readouterr().err
    assert not (out / "pretrain.ckpt").exists()


def test_gen_scenes(cfg_path, tmp_path):
    out = tmp_path / "scenes"
    assert main(["gen-scenes", "--config", cfg_path, "--out-dir", str(out)]) == 0
    files = sorted(f for f in os.listdir(out) if f.startswith("scene_"))
    assert len(files) == 2
    first = (out / files[0]).read_text().splitlines()[0]
    assert first.startswith("SCENE v1 6 6 ")


def test_pretrain_writes_loadable_checkpoint(cfg_path, tmp_path):
    out = tmp_path / "pre"
    code = main([
        "pretrain", "--config", cfg_path, "--out-dir", str(out),
        "--episodes", "6", "--epochs", "1", "--lr", "0.001",
    ])
    assert code == 0
    ckpt = out / "pretrain.ckpt"
    assert ckpt.exists()
    data = load_checkpoint(ckpt)
    cfg = parse_config(TINY_CONFIG)
    assert data.config_hash == config_hash(cfg)
    assert any(name.startswith("encoder.") for name in data.params)
    assert (out / "pretrain_log.csv").read_text().startswith("epoch,mean_loss,holdout_accuracy")
    # dataset is cached and reused
    caches = [f for f in os.listdir(out) if f.startswith("dataset_expert_")]
    assert len(caches) == 1


def test_train_single_worker_reproducible(cfg_path, tmp_path):
    outs = []
    for name in ("t1", "t2"):
        out = tmp_path / name
        code = main(["train", "--config", cfg_path, "--out-dir", str(out), "--episodes", "4"])
        assert code == 0
        outs.append((out / "train_stats.csv").read_text())
        assert (out / "policy.ckpt").exists()
    assert outs[0] == outs[1]
    assert outs[0].splitlines()[0] == "episode,worker,target,steps,reward,success,spl_term"
    assert len(outs[0].splitlines()) == 5


def test_train_resume_continues_version(cfg_path, tmp_path):
    out = tmp_path / "resume"
    assert main(["train", "--config", cfg_path, "--out-dir", str(out), "--episodes", "3"]) == 0
    first = load_checkpoint(out / "policy.ckpt")
    assert first.store_version > 0
    assert first.has_optimizer
    assert main([
        "train", "--config", cfg_path, "--out-dir", str(out), "--episodes", "2",
        "--init", str(out / "policy.ckpt"),
    ]) == 0
    second = load_checkpoint(out / "policy.ckpt")
    assert second.store_version > first.store_version


def test_train_rejects_incompatible_checkpoint(cfg_path, tmp_path, capsys):
    out = tmp_path / "mismatch"
    assert main(["train", "--config", cfg_path, "--out-dir", str(out), "--episodes", "2"]) == 0
    other_cfg = tmp_path / "other.cfg"
    other_cfg.write_text(TINY_CONFIG.replace("feature_width=8", "feature_width=16"))
    code = main([
        "train", "--config", str(other_cfg), "--out-dir", str(out), "--episodes", "2",
        "--init", str(out / "policy.ckpt"),
    ])
    assert code == 1
    err = capsys.readouterr().err
    cfg = parse_config(TINY_CONFIG)
    assert config_hash(cfg) in err  # both hashes printed
    assert "incompatible" in err


def test_train_accepts_pretrain_init(cfg_path, tmp_path):
    pre_out = tmp_path / "pre"
    assert main([
        "pretrain", "--config", cfg_path, "--out-dir", str(pre_out),
        "--episodes", "5", "--epochs", "1", "--lr", "0.001",
    ]) == 0
    out = tmp_path / "ft"
    assert main([
        "train", "--config", cfg_path, "--out-dir", str(out), "--episodes", "2",
        "--init", str(pre_out / "pretrain.ckpt"),
    ]) == 0


def test_eval_expert_oracle_perfect(cfg_path, tmp_path, capsys):
    out = tmp_path / "ev"
    code = main([
        "eval", "--config", cfg_path, "--out-dir", str(out),
        "--expert-oracle", "--runs", "2", "--episodes-per-scene", "3",
    ])
    assert code == 0
    text = (out / "eval_report.csv").read_text().splitlines()
    assert text[0] == "split,metric,mean,variance,n_runs,n_episodes"
    all_sr = next(row for row in text if row.startswith("ALL,SR"))
    assert all_sr.split(",")[2] == "1.000000"


def test_eval_report_matches_recomputation(cfg_path, tmp_path):
    out = tmp_path / "ev2"
    assert main([
        "eval", "--config", cfg_path, "--out-dir", str(out),
        "--random-policy", "--runs", "2", "--episodes-per-scene", "4",
    ]) == 0
    # recompute the report from the raw per-episode rows
    lines = (out / "eval_episodes.csv").read_text().splitlines()[1:]
    runs = {}
    for line in lines:
        run, scene, target, seed, success, ln, lopt = line.split(",")
        runs.setdefault(int(run), []).append((int(success), int(ln), int(lopt)))
    sr_per_run = [sum(s for s, _, _ in rows) / len(rows) for _, rows in sorted(runs.items())]
    expected_sr = sum(sr_per_run) / len(sr_per_run)
    report_lines = (out / "eval_report.csv").read_text().splitlines()
    got_sr = float(next(r for r in report_lines if r.startswith("ALL,SR")).split(",")[2])
    assert got_sr == pytest.approx(expected_sr, abs=1e-6)

    spl_terms = {
        run: [s * lo / max(ln, lo) for s, ln, lo in rows] for run, rows in sorted(runs.items())
    }
    spl_per_run = [sum(v) / len(v) for v in spl_terms.values()]
    expected_spl = sum(spl_per_run) / len(spl_per_run)
    got_spl = float(next(r for r in report_lines if r.startswith("ALL,SPL")).split(",")[2])
    assert got_spl == pytest.approx(expected_spl, abs=1e-6)


def test_eval_single_run_omits_variance(cfg_path, tmp_path):
    out = tmp_path / "ev3"
    assert main([
        "eval", "--config", cfg_path, "--out-dir", str(out),
        "--expert-oracle", "--runs", "1", "--episodes-per-scene", "2",
    ]) == 0
    rows = (out / "eval_report.csv").read_text().splitlines()
    all_sr = next(r for r in rows if r.startswith("ALL,SR"))
    assert all_sr.split(",")[3] == ""  # variance column empty

    code = main([
        "eval", "--config", cfg_path, "--out-dir", str(out), "--runs", "1",
        "--episodes-per-scene", "2",
    ])
    assert code == 2  # no checkpoint and no oracle flag


def test_eval_trained_checkpoint(cfg_path, tmp_path):
    out = tmp_path / "trained"
    assert main(["train", "--config", cfg_path, "--out-dir", str(out), "--episodes", "2"]) == 0
    assert main([
        "eval", "--config", cfg_path, "--out-dir", str(out),
        "--checkpoint", str(out / "policy.ckpt"), "--runs", "1", "--episodes-per-scene", "2",
    ]) == 0


def test_eval_corrupt_checkpoint(cfg_path, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    out = tmp_path / "ev4"
    code = main([
        "eval", "--config", cfg_path, "--out-dir", str(out),
        "--checkpoint", str(bad), "--runs", "1", "--episodes-per-scene", "1",
    ])
    assert code == 1
    assert "magic" in capsys.readouterr().err


def test_env_seed_override(cfg_path, tmp_path, monkeypatch):
    out1 = tmp_path / "s1"
    out2 = tmp_path / "s2"
    monkeypatch.setenv("CRGTSR_SEED", "123")
    assert main(["train", "--config", cfg_path, "--out-dir", str(out1), "--episodes", "2"]) == 0
    monkeypatch.delenv("CRGTSR_SEED")
    assert main(["train", "--config", cfg_path, "--out-dir", str(out2), "--episodes", "2"]) == 0
    assert (out1 / "train_stats.csv").read_text() != (out2 / "train_stats.csv").read_text()
