"""Level-axis MLP that folds the stack of per-block outputs into one tensor."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from camo_bench.encoder.tensors import FeatureTensor
from camo_bench.encoder.weights import FusionWeights


def stack_levels(levels: Sequence[FeatureTensor]) -> np.ndarray:
    """(levels, tokens, channels) array; every level must share one shape and id set."""
    if not levels:
        raise ValueError("empty level stack")
    first = levels[0]
    for i, lv in enumerate(levels[1:], start=2):
        if lv.data.shape != first.data.shape or not np.array_equal(lv.token_ids, first.token_ids):
            raise ValueError(f"level {i} shape {lv.data.shape} differs from level 1 shape {first.data.shape}")
    return np.stack([lv.data for lv in levels])


def fusion_core(stack: np.ndarray, fw: FusionWeights) -> tuple[np.ndarray, list]:
    """Linear layers on the level axis, ReLU between them, none after the last."""
    if stack.shape[0] != fw.dims[0]:
        raise ValueError(f"stack has {stack.shape[0]} levels, fusion MLP expects {fw.dims[0]}")
    x = np.moveaxis(stack, 0, -1)  # (tokens, channels, levels)
    acts = [x]
    n = len(fw.weights)
    for i, (w, b) in enumerate(zip(fw.weights, fw.biases)):
        x = x @ w + b
        if i < n - 1:
            x = np.maximum(x, 0.0)
        acts.append(x)
    return x[..., 0], acts


def fusion_backward(dout: np.ndarray, fw: FusionWeights, acts: list) -> tuple[np.ndarray, dict]:
    grads = {}
    d = dout[..., None]
    n = len(fw.weights)
    for i in reversed(range(n)):
        if i < n - 1:
            d = d * (acts[i + 1] > 0)
        x_in = acts[i]
        flat_x = x_in.reshape(-1, x_in.shape[-1])
        flat_d = d.reshape(-1, d.shape[-1])
        grads[f"w{i}"] = flat_x.T @ flat_d
        grads[f"b{i}"] = flat_d.sum(axis=0)
        d = d @ fw.weights[i].T
    return np.moveaxis(d, -1, 0), grads


def level_fusion_mlp(levels: Sequence[FeatureTensor], fw: FusionWeights) -> FeatureTensor:
    """Compress ``n`` same-shaped levels into one, independently per (token, channel)."""
    out, _ = fusion_core(stack_levels(levels), fw)
    return levels[0].with_data(out)
