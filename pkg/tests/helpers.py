"""Shared test utilities: the finite-difference gradient oracle.

The oracle is deliberately independent of the autodiff implementation: it
re-evaluates the forward function with perturbed raw numpy buffers and never
reads .grad except to compare against it.
"""

from __future__ import annotations

import numpy as np

from crgtsr.config import RunConfig
from crgtsr.tensor import Tensor, backward

FD_STEP = 1e-5
REL_TOL = 1e-4


def tiny_cfg(**overrides) -> RunConfig:
    """Small-width config for fast model tests; full category set."""
    base = dict(
        n_categories=22, seq_len=4, heads=2, layers=2, dict_width=6,
        appearance_width=5, feature_width=8, global_width=8, hidden_width=12,
        target_width=4, grid_rows=6, grid_cols=6, obstacle_density=0.12,
        object_count=5, scene_count=2, max_episode_len=20, rollout_horizon=8,
        workers=1, rl_lr=1e-3,
    )
    base.update(overrides)
    cfg = RunConfig(**base)
    cfg.validate()
    return cfg


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1.0)


def numeric_grad(fn, tensor: Tensor, index, h: float = FD_STEP) -> float:
    """Central finite difference of scalar fn() w.r.t. tensor.data[index]."""
    orig = tensor.data[index]
    tensor.data[index] = orig + h
    up = float(fn().data)
    tensor.data[index] = orig - h
    down = float(fn().data)
    tensor.data[index] = orig
    return (up - down) / (2.0 * h)


def check_grads(fn, tensors, coords_per_tensor: int | None = None, rng=None, rtol: float = REL_TOL):
    """Run fn() -> scalar Tensor, backprop, compare grads against central FD.

    With coords_per_tensor=None every coordinate is checked; otherwise that
    many random coordinates per tensor are sampled with rng.
    """
    out = fn()
    for t in tensors:
        t.grad = None
    backward(out)
    worst = 0.0
    for t in tensors:
        assert t.grad is not None, "no gradient reached a checked tensor"
        if coords_per_tensor is None:
            indices = list(np.ndindex(t.data.shape))
        else:
            indices = []
            for _ in range(coords_per_tensor):
                indices.append(tuple(int(rng.integers(s)) for s in t.data.shape))
        for idx in indices:
            num = numeric_grad(fn, t, idx)
            ana = float(t.grad[idx])
            err = rel_err(ana, num)
            worst = max(worst, err)
            assert err < rtol, f"gradient mismatch at {idx}: autodiff {ana}, finite difference {num}, rel err {err}"
    return worst
