"""Central-difference checks of the hand-written backward passes.

The probe loss is the sum of the output entries, so every backward is
called with an all-ones output gradient.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from camo_bench.encoder.blocks import block_core, block_core_backward, block_ce_backward, block_forward_ce_cached
from camo_bench.encoder.config import EncoderConfig
from camo_bench.encoder.fusion import fusion_backward, fusion_core
from camo_bench.encoder.mls import mls_backward, mls_trace
from camo_bench.encoder.tensors import FeatureTensor
from camo_bench.encoder.weights import BlockWeights, EncoderWeights, FusionWeights
from camo_bench.errors import NonFiniteError

FD_STEP = 1e-5
# Entries smaller than this fraction of the largest probed gradient are
# measured against that floor: a structurally zero gradient (e.g. a key
# bias under softmax) otherwise reports pure round-off as error.
REL_FLOOR = 1e-4

Params = Mapping[str, np.ndarray]


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    mag = np.maximum(np.abs(analytic), np.abs(numeric))
    scale = floor * mag.max(initial=0.0)
    denom = np.maximum(mag, scale)
    return np.divide(np.abs(analytic - numeric), denom, out=np.zeros_like(mag), where=denom > 0)


def _probe_indices(shape, limit, rng):
    size = int(np.prod(shape))
    if limit is None or limit >= size:
        return range(size)
    return rng.choice(size, size=limit, replace=False)


def finite_difference_check(
    forward: Callable[[Params], np.ndarray],
    backward: Callable[[Params], Mapping[str, np.ndarray]],
    params: Params,
    *,
    probe: Mapping[str, int | None] | None = None,
    step: float = FD_STEP,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``probe`` limits which parameters are checked: name -> number of
    randomly chosen entries (``None`` for all). Default is every entry of
    every parameter.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    analytic = backward(params)
    names = list(params) if probe is None else list(probe)
    rng = np.random.default_rng(seed)
    analytic_vals, numeric_vals = [], []
    for name in names:
        grad = np.asarray(analytic[name], dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite analytic gradient for {name}")
        base = params[name]
        flat = base.reshape(-1)
        limit = None if probe is None else probe[name]
        for idx in _probe_indices(base.shape, limit, rng):
            orig = flat[idx]
            flat[idx] = orig + step
            up = float(np.sum(forward(params)))
            flat[idx] = orig - step
            down = float(np.sum(forward(params)))
            flat[idx] = orig
            numeric = (up - down) / (2 * step)
            if not np.isfinite(numeric):
                raise NonFiniteError(f"non-finite numeric gradient for {name}[{idx}]")
            analytic_vals.append(float(grad.reshape(-1)[idx]))
            numeric_vals.append(numeric)
    if not analytic_vals:
        return 0.0
    return float(relative_errors(analytic_vals, numeric_vals).max())


# -- ready-made checks for each differentiable operation --------------------

def check_linear(x, w, b, **kw) -> float:
    params = {"x": x, "w": w, "b": b}

    def fwd(p):
        return p["x"] @ p["w"] + p["b"]

    def bwd(p):
        ones = np.ones((p["x"].shape[0], p["w"].shape[1]))
        return {"x": ones @ p["w"].T, "w": p["x"].T @ ones, "b": ones.sum(axis=0)}

    return finite_difference_check(fwd, bwd, params, **kw)


def check_level_fusion(stack: np.ndarray, fw: FusionWeights, **kw) -> float:
    params = {"stack": stack, **fw.as_dict()}

    def fwd(p):
        return fusion_core(p["stack"], FusionWeights.from_dict({k: v for k, v in p.items() if k != "stack"}))[0]

    def bwd(p):
        fwp = FusionWeights.from_dict({k: v for k, v in p.items() if k != "stack"})
        out, acts = fusion_core(p["stack"], fwp)
        d_stack, grads = fusion_backward(np.ones_like(out), fwp, acts)
        return {"stack": d_stack, **grads}

    return finite_difference_check(fwd, bwd, params, **kw)


def check_block(x: np.ndarray, w: BlockWeights, n_heads: int = 1, **kw) -> float:
    params = {"x": x, **w.as_dict()}

    def split(p):
        return p["x"], BlockWeights(**{k: v for k, v in p.items() if k != "x"})

    def fwd(p):
        xx, ww = split(p)
        return block_core(xx, ww, n_heads)[0]

    def bwd(p):
        xx, ww = split(p)
        out, cache = block_core(xx, ww, n_heads)
        dx, grads = block_core_backward(np.ones_like(out), ww, cache)
        return {"x": dx, **grads}

    return finite_difference_check(fwd, bwd, params, **kw)


def check_block_ce(h: FeatureTensor, w: BlockWeights, keep_ratio: float, n_heads: int = 1, **kw) -> float:
    """Selection frozen at the unperturbed input (straight-through on the mask)."""
    _, ref = block_forward_ce_cached(h, w, keep_ratio, n_heads)
    rows = ref.rows
    params = {"x": h.data, **w.as_dict()}

    def split(p):
        return p["x"], BlockWeights(**{k: v for k, v in p.items() if k != "x"})

    def fwd(p):
        xx, ww = split(p)
        return block_core(xx, ww, n_heads)[0][rows]

    def bwd(p):
        xx, ww = split(p)
        _, cache = block_forward_ce_cached(h.with_data(xx), ww, keep_ratio, n_heads)
        dx, grads = block_ce_backward(np.ones((len(cache.rows), xx.shape[1])), ww, cache)
        return {"x": dx, **grads}

    return finite_difference_check(fwd, bwd, params, **kw)


def check_mls(h0: FeatureTensor, weights: EncoderWeights, config: EncoderConfig, *,
              per_param: int | None = 3, **kw) -> float:
    """Whole encoder, w.r.t. the input, the fusion MLP and every block.

    Pruning choices are frozen at the unperturbed pass.
    """
    ref = mls_trace(h0, weights, config)
    frozen_rows = {i: c.rows for i, c in enumerate(ref.pruned_caches) if hasattr(c, "rows")}

    params = {"h0": h0.data}
    params.update({f"fusion.{k}": v for k, v in weights.fusion.as_dict().items()})
    for i, bw in enumerate(weights.blocks):
        params.update({f"block{i}.{k}": v for k, v in bw.as_dict().items()})

    def rebuild(p):
        blocks = tuple(
            BlockWeights(**{k.split(".", 1)[1]: v for k, v in p.items() if k.startswith(f"block{i}.")})
            for i in range(len(weights.blocks))
        )
        fusion = FusionWeights.from_dict({k.split(".", 1)[1]: v for k, v in p.items() if k.startswith("fusion.")})
        return h0.with_data(p["h0"]), weights.replace(blocks=blocks, fusion=fusion)

    def fwd(p):
        x0, ww = rebuild(p)
        return _mls_frozen(x0, ww, config, frozen_rows)

    def bwd(p):
        x0, ww = rebuild(p)
        grads = mls_backward(mls_trace(x0, ww, config), ww, config)
        out = {"h0": grads.h0}
        out.update({f"fusion.{k}": v for k, v in grads.fusion.items()})
        for i, g in enumerate(grads.blocks):
            out.update({f"block{i}.{k}": v for k, v in g.items()})
        return out

    probe = {name: per_param for name in params}
    return finite_difference_check(fwd, bwd, params, probe=probe, **kw)


def _mls_frozen(h0: FeatureTensor, weights: EncoderWeights, config: EncoderConfig, frozen_rows) -> np.ndarray:
    """Forward pass with the pruning rows replayed instead of re-selected."""
    heads = config.n_heads
    x = h0.data
    levels = []
    for w in weights.blocks:
        x = block_core(x, w, heads)[0]
        levels.append(x)
    fused = fusion_core(np.stack(levels), weights.fusion)[0]
    x, ids = h0.data, h0.token_ids
    for i, w in enumerate(weights.blocks):
        x = block_core(x, w, heads)[0]
        if i in frozen_rows:
            x, ids = x[frozen_rows[i]], ids[frozen_rows[i]]
    restored = np.zeros_like(h0.data)
    restored[ids] = x
    return (1.0 - config.gamma) * restored + config.gamma * fused
