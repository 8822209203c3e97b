"""Two-stream multi-level encoder.

Both streams start from the embedded tokens and share each block's
weights. The pruning stream eliminates search tokens at the configured
blocks; the level stream never prunes and keeps every block's output.
The result blends the restored pruning-stream output with the fused
levels: ``(1 - gamma) * restore(H_n) + gamma * MLP([L_1 .. L_n])``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from camo_bench.encoder.blocks import (
    block_ce_backward,
    block_core,
    block_core_backward,
    block_forward_ce_cached,
    pad_restore,
    pad_restore_backward,
)
from camo_bench.encoder.config import EncoderConfig
from camo_bench.encoder.fusion import fusion_backward, fusion_core, stack_levels
from camo_bench.encoder.tensors import FeatureTensor
from camo_bench.encoder.weights import EncoderWeights
from camo_bench.errors import ConfigError


def embed(template_patches, search_patches, weights: EncoderWeights, config: EncoderConfig) -> FeatureTensor:
    """Project patches, add position embeddings; template tokens first."""
    t = np.asarray(template_patches, dtype=np.float64)
    s = np.asarray(search_patches, dtype=np.float64)
    if t.ndim != 2 or s.ndim != 2:
        raise ValueError("patches must be 2-D (count, patch_dim)")
    if len(s) == 0:
        raise ValueError("at least one search patch is required")
    if (len(t), len(s)) != (config.n_template_tokens, config.n_search_tokens):
        raise ValueError(
            f"got {len(t)} template + {len(s)} search patches, config expects "
            f"{config.n_template_tokens} + {config.n_search_tokens}"
        )
    if t.shape[1] != config.patch_dim or s.shape[1] != config.patch_dim:
        raise ValueError(f"patch width must be {config.patch_dim}")
    x = np.concatenate([t, s]) @ weights.patch_w + weights.patch_b + weights.pos_embed
    return FeatureTensor.full(x, config.n_template_tokens)


def random_patches(config: EncoderConfig, seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(config.seed + 1 if seed is None else seed)
    return (rng.normal(size=(config.n_template_tokens, config.patch_dim)),
            rng.normal(size=(config.n_search_tokens, config.patch_dim)))


def check_weights(weights: EncoderWeights, config: EncoderConfig):
    if len(weights.blocks) != config.n_blocks:
        raise ConfigError(f"{len(weights.blocks)} blocks of weights for n_blocks={config.n_blocks}")
    if weights.fusion.dims != config.mlp_dims:
        raise ConfigError(f"fusion MLP dims {weights.fusion.dims} != config {config.mlp_dims}")


@dataclass
class MLSTrace:
    """Every intermediate of one forward pass, plus backward caches."""

    h0: FeatureTensor
    levels: list[FeatureTensor]  # level stream, one per block
    pruned: list[FeatureTensor]  # pruning stream, one per block
    restored: FeatureTensor
    fused: FeatureTensor
    output: FeatureTensor
    gamma: float
    level_caches: list
    pruned_caches: list
    fusion_acts: list


def mls_trace(h0: FeatureTensor, weights: EncoderWeights, config: EncoderConfig) -> MLSTrace:
    check_weights(weights, config)
    heads = config.n_heads
    levels, level_caches = [], []
    x = h0
    for w in weights.blocks:
        out, cache = block_core(x.data, w, heads)
        x = x.with_data(out)
        levels.append(x)
        level_caches.append(cache)

    pruned, pruned_caches = [], []
    x = h0
    for i, w in enumerate(weights.blocks, start=1):
        if i in config.prune_at:
            x, cache = block_forward_ce_cached(x, w, config.keep_ratio, heads)
        else:
            out, cache = block_core(x.data, w, heads)
            x = x.with_data(out)
        pruned.append(x)
        pruned_caches.append(cache)

    restored = pad_restore(pruned[-1], h0.tokens)
    fused_data, acts = fusion_core(stack_levels(levels), weights.fusion)
    fused = h0.with_data(fused_data)
    g = config.gamma
    out = (1.0 - g) * restored.data + g * fused.data
    return MLSTrace(h0, levels, pruned, restored, fused, h0.with_data(out), g,
                    level_caches, pruned_caches, acts)


def mls_forward(h0: FeatureTensor, weights: EncoderWeights, config: EncoderConfig) -> FeatureTensor:
    return mls_trace(h0, weights, config).output


@dataclass
class MLSGradients:
    h0: np.ndarray
    blocks: list[dict]
    fusion: dict


def mls_backward(trace: MLSTrace, weights: EncoderWeights, config: EncoderConfig,
                 grad_out: np.ndarray | None = None) -> MLSGradients:
    """Gradients of ``sum(grad_out * F)``; pruning choices are held fixed."""
    if grad_out is None:
        grad_out = np.ones_like(trace.output.data)
    g = trace.gamma
    block_grads = [dict.fromkeys(weights.blocks[0].as_dict(), 0.0) for _ in weights.blocks]

    d_stack, fusion_grads = fusion_backward(g * grad_out, weights.fusion, trace.fusion_acts)
    d_h0 = np.zeros_like(trace.h0.data)

    # level stream: each level feeds the MLP and the next block
    d = np.zeros_like(trace.h0.data)
    for i in reversed(range(len(weights.blocks))):
        d = d + d_stack[i]
        d, grads = block_core_backward(d, weights.blocks[i], trace.level_caches[i])
        for k, v in grads.items():
            block_grads[i][k] = block_grads[i][k] + v
    d_h0 += d

    d = pad_restore_backward((1.0 - g) * grad_out, trace.pruned[-1].token_ids)
    for i in reversed(range(len(weights.blocks))):
        cache = trace.pruned_caches[i]
        if i + 1 in config.prune_at:
            d, grads = block_ce_backward(d, weights.blocks[i], cache)
        else:
            d, grads = block_core_backward(d, weights.blocks[i], cache)
        for k, v in grads.items():
            block_grads[i][k] = block_grads[i][k] + v
    d_h0 += d
    return MLSGradients(d_h0, block_grads, fusion_grads)

