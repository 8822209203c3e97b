"""Transformer blocks, early candidate elimination and token restoration.

Forward functions keep a cache for the matching ``*_backward``; gradients
are those of ``sum(grad_out * output)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from camo_bench.encoder.tensors import FeatureTensor
from camo_bench.encoder.weights import BlockWeights
from camo_bench.errors import NonFiniteError

LN_EPS = 1e-6
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _require_finite(a: np.ndarray, what: str):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite values in {what}")


# -- primitives -------------------------------------------------------------

def layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xh = xc * rstd
    return xh * g + b, (xh, rstd, g)


def layer_norm_backward(dy, cache):
    xh, rstd, g = cache
    dg = (dy * xh).sum(axis=0)
    db = dy.sum(axis=0)
    dxh = dy * g
    dx = rstd * (dxh - dxh.mean(axis=-1, keepdims=True) - xh * (dxh * xh).mean(axis=-1, keepdims=True))
    return dx, dg, db


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def softmax(s):
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def linear(x, w, b):
    return x @ w + b


def linear_backward(dy, x, w):
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


# -- block ------------------------------------------------------------------

@dataclass
class BlockCache:
    x: np.ndarray
    ln1: tuple
    a: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    probs: np.ndarray  # (heads, tokens, tokens), rows are queries
    o: np.ndarray
    x1: np.ndarray
    ln2: tuple
    c: np.ndarray
    z: np.ndarray
    f: np.ndarray
    n_heads: int


def _split_heads(t, n_heads):
    n, d = t.shape
    return t.reshape(n, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(t):
    h, n, dh = t.shape
    return t.transpose(1, 0, 2).reshape(n, h * dh)


def block_core(x: np.ndarray, w: BlockWeights, n_heads: int) -> tuple[np.ndarray, BlockCache]:
    """Pre-norm block: ``x1 = x + MHSA(LN1(x))``, ``out = x1 + FFN(LN2(x1))``."""
    a, ln1 = layer_norm(x, w.ln1_g, w.ln1_b)
    q = linear(a, w.wq, w.bq)
    k = linear(a, w.wk, w.bk)
    v = linear(a, w.wv, w.bv)
    qh, kh, vh = (_split_heads(t, n_heads) for t in (q, k, v))
    scale = 1.0 / math.sqrt(qh.shape[-1])
    probs = softmax(qh @ kh.transpose(0, 2, 1) * scale)
    o = _merge_heads(probs @ vh)
    x1 = x + linear(o, w.wo, w.bo)
    c, ln2 = layer_norm(x1, w.ln2_g, w.ln2_b)
    z = linear(c, w.w1, w.b1)
    f = gelu(z)
    out = x1 + linear(f, w.w2, w.b2)
    _require_finite(out, "block output")
    return out, BlockCache(x, ln1, a, q, k, v, probs, o, x1, ln2, c, z, f, n_heads)


def block_core_backward(dout: np.ndarray, w: BlockWeights, cache: BlockCache) -> tuple[np.ndarray, dict]:
    g = {}
    dx1 = dout.copy()
    df, g["w2"], g["b2"] = linear_backward(dout, cache.f, w.w2)
    dz = df * gelu_grad(cache.z)
    dc, g["w1"], g["b1"] = linear_backward(dz, cache.c, w.w1)
    dx1_ln, g["ln2_g"], g["ln2_b"] = layer_norm_backward(dc, cache.ln2)
    dx1 += dx1_ln

    dx = dx1.copy()
    do, g["wo"], g["bo"] = linear_backward(dx1, cache.o, w.wo)
    h = cache.n_heads
    qh, kh, vh = (_split_heads(t, h) for t in (cache.q, cache.k, cache.v))
    scale = 1.0 / math.sqrt(qh.shape[-1])
    doh = _split_heads(do, h)
    p = cache.probs
    dp = doh @ vh.transpose(0, 2, 1)
    dvh = p.transpose(0, 2, 1) @ doh
    ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True)) * scale
    dqh = ds @ kh
    dkh = ds.transpose(0, 2, 1) @ qh
    dq, dk, dv = (_merge_heads(t) for t in (dqh, dkh, dvh))
    da = np.zeros_like(cache.a)
    for name, d in (("q", dq), ("k", dk), ("v", dv)):
        da_part, g["w" + name], g["b" + name] = linear_backward(d, cache.a, getattr(w, "w" + name))
        da += da_part
    dx_ln, g["ln1_g"], g["ln1_b"] = layer_norm_backward(da, cache.ln1)
    dx += dx_ln
    _require_finite(dx, "block input gradient")
    return dx, g


def block_forward(h: FeatureTensor, w: BlockWeights, n_heads: int = 1) -> FeatureTensor:
    """Plain block on every token; token ids pass through unchanged."""
    out, _ = block_core(h.data, w, n_heads)
    return h.with_data(out)


# -- early candidate elimination --------------------------------------------

def keep_count(keep_ratio: float, n_search: int) -> int:
    if not keep_ratio > 0:
        raise ValueError(f"keep_ratio must be positive, got {keep_ratio!r}")
    if keep_ratio > 1:
        raise ValueError(f"keep_ratio must not exceed 1, got {keep_ratio!r}")
    # rounding first stops 0.7 * 10 = 7.000000000000001 from becoming 8
    return min(n_search, math.ceil(round(keep_ratio * n_search, 9)))


def template_attention_scores(probs: np.ndarray, n_template: int) -> np.ndarray:
    """Mean attention each search token receives from template queries, over heads."""
    return probs[:, :n_template, n_template:].mean(axis=(0, 1))


def select_search_tokens(scores: np.ndarray, search_ids: np.ndarray, keep_ratio: float) -> np.ndarray:
    """Positions (into the search rows) of the survivors, in original order."""
    k = keep_count(keep_ratio, len(scores))
    # lexsort: last key is primary -> highest score, then lowest id
    order = np.lexsort((search_ids, -scores))
    return np.sort(order[:k])


@dataclass
class CECache:
    block: BlockCache
    rows: np.ndarray  # rows of the block output that survive


def block_forward_ce_cached(
    h: FeatureTensor, w: BlockWeights, keep_ratio: float, n_heads: int = 1
) -> tuple[FeatureTensor, CECache]:
    keep_count(keep_ratio, max(h.n_search, 1))
    out, cache = block_core(h.data, w, n_heads)
    nt = h.n_template
    if h.n_search == 0:
        rows = np.arange(nt)
    else:
        scores = template_attention_scores(cache.probs, nt)
        kept = select_search_tokens(scores, h.token_ids[nt:], keep_ratio)
        rows = np.concatenate([np.arange(nt), nt + kept])
    return FeatureTensor(out[rows], h.token_ids[rows], nt), CECache(cache, rows)


def block_forward_ce(h: FeatureTensor, w: BlockWeights, keep_ratio: float, n_heads: int = 1) -> FeatureTensor:
    """Block followed by elimination of the least template-attended search tokens.

    Keeps ``ceil(keep_ratio * S)`` of the ``S`` search tokens; template
    tokens always stay. Ties go to the lower token id.
    """
    return block_forward_ce_cached(h, w, keep_ratio, n_heads)[0]


def block_ce_backward(dout: np.ndarray, w: BlockWeights, cache: CECache) -> tuple[np.ndarray, dict]:
    """Selection is held fixed: eliminated rows get zero gradient."""
    full = np.zeros((cache.block.x.shape[0], dout.shape[1]))
    full[cache.rows] = dout
    return block_core_backward(full, w, cache.block)


# -- restoration ------------------------------------------------------------

def pad_restore(h: FeatureTensor, original_token_count: int) -> FeatureTensor:
    """Scatter rows back to their original positions; eliminated slots are zero."""
    ids = h.token_ids
    if len(np.unique(ids)) != len(ids):
        raise ValueError("duplicate token ids")
    if len(ids) and (ids.min() < 0 or ids.max() >= original_token_count):
        raise ValueError(f"token ids out of range for {original_token_count} tokens")
    out = np.zeros((original_token_count, h.channels))
    out[ids] = h.data
    return FeatureTensor.full(out, h.n_template)


def pad_restore_backward(dout: np.ndarray, token_ids: np.ndarray) -> np.ndarray:
    return dout[token_ids]
