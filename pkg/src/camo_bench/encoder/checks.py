"""Self-check suite behind ``camo-bench encoder-check``."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from camo_bench.encoder import gradcheck
from camo_bench.encoder.blocks import pad_restore
from camo_bench.encoder.config import EncoderConfig
from camo_bench.encoder.mls import embed, mls_trace, random_patches
from camo_bench.encoder.tensors import FeatureTensor, checksum
from camo_bench.encoder.weights import EncoderWeights, init_block, init_fusion, init_weights

GAMMA_SWEEP = tuple(round(0.1 * i, 1) for i in range(1, 11))
AFFINE_TOL = 1e-12
FUSION_GRAD_TOL = 1e-6
BLOCK_GRAD_TOL = 1e-5
# Gradient checks need weights large enough that no ReLU pre-activation
# sits within a finite-difference step of its kink.
GRADCHECK_STD = 0.3


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


def with_gamma(weights_config: EncoderConfig, gamma: float) -> EncoderConfig:
    return dataclasses.replace(weights_config, gamma=gamma)


def diagnostic_dump(h0: FeatureTensor, weights: EncoderWeights, config: EncoderConfig) -> dict:
    """Shapes and bit-exact checksums of every level, for regression diffs."""
    tr = mls_trace(h0, weights, config)

    def entry(i, t):
        return {"level": i, "shape": [t.tokens, t.channels], "sha256": checksum(t.data),
                "token_ids": t.token_ids.tolist()}

    return {
        "config": config.to_dict(),
        "h0": entry(0, h0),
        "levels": [entry(i, t) for i, t in enumerate(tr.levels, start=1)],
        "pruned": [entry(i, t) for i, t in enumerate(tr.pruned, start=1)],
        "restored": entry(config.n_blocks, tr.restored),
        "fused": entry(config.n_blocks, tr.fused),
        "output": entry(config.n_blocks, tr.output),
    }


def gamma_sweep(h0, weights, config, gammas=GAMMA_SWEEP) -> list[dict]:
    return [
        {"gamma": g, "sha256": checksum(mls_trace(h0, weights, with_gamma(config, g)).output.data)}
        for g in gammas
    ]


def _toy_gradient_checks(config: EncoderConfig) -> list[CheckResult]:
    rng = np.random.default_rng(config.seed + 17)
    dims = config.mlp_dims
    fw = init_fusion(rng, dims, std=GRADCHECK_STD)
    fw = type(fw)(fw.weights, tuple(rng.normal(0, 0.1, b.shape) for b in fw.biases))
    fusion_err = gradcheck.check_level_fusion(rng.normal(size=(dims[0], 4, 3)), fw)

    dim = min(config.embed_dim, 8)
    heads = config.n_heads if dim % config.n_heads == 0 else 1
    bw = init_block(rng, dim, dim * config.mlp_ratio, std=GRADCHECK_STD)
    bw = bw.map(lambda a: a + rng.normal(0, 0.1, a.shape))
    block_err = gradcheck.check_block(rng.normal(size=(6, dim)), bw, heads)

    n_tok = min(config.n_tokens, 16)
    n_tmp = min(config.n_template_tokens, n_tok - 1)
    h = FeatureTensor.full(rng.normal(size=(n_tok, dim)), n_tmp)
    ce_err = gradcheck.check_block_ce(h, bw, config.keep_ratio, heads)

    return [
        CheckResult("gradient: level fusion MLP", fusion_err < FUSION_GRAD_TOL,
                    f"max rel err {fusion_err:.3e} < {FUSION_GRAD_TOL:g}"),
        CheckResult("gradient: plain block", block_err < BLOCK_GRAD_TOL,
                    f"max rel err {block_err:.3e} < {BLOCK_GRAD_TOL:g}"),
        CheckResult("gradient: eliminating block", ce_err < BLOCK_GRAD_TOL,
                    f"max rel err {ce_err:.3e} < {BLOCK_GRAD_TOL:g}"),
    ]


def run_encoder_checks(config: EncoderConfig, *, gradients: bool = True) -> tuple[list[CheckResult], dict]:
    """Run every invariant; returns the results and a JSON-able payload."""
    weights = init_weights(config)
    h0 = embed(*random_patches(config), weights, config)
    tr = mls_trace(h0, weights, config)
    results = []

    out = tr.output
    results.append(CheckResult(
        "shape", out.data.shape == h0.data.shape,
        f"output {list(out.data.shape)} vs input {list(h0.data.shape)}"))

    f0 = mls_trace(h0, weights, with_gamma(config, 0.0))
    results.append(CheckResult(
        "gamma=0 equals restored pruning stream",
        np.array_equal(f0.output.data, f0.restored.data)))
    f1 = mls_trace(h0, weights, with_gamma(config, 1.0))
    results.append(CheckResult(
        "gamma=1 equals fused levels", np.array_equal(f1.output.data, f1.fused.data)))
    f_half = mls_trace(h0, weights, with_gamma(config, 0.5)).output.data
    gap = float(np.max(np.abs(f_half - (f0.output.data + f1.output.data) / 2)))
    results.append(CheckResult("affine in gamma", gap <= AFFINE_TOL, f"max gap {gap:.3e} <= {AFFINE_TOL:g}"))

    counts = [t.tokens for t in tr.pruned]
    results.append(CheckResult(
        "pruning stream token count non-increasing",
        all(b <= a for a, b in zip([h0.tokens] + counts, counts)), f"{counts}"))
    results.append(CheckResult(
        "level stream token count constant",
        all(t.tokens == h0.tokens for t in tr.levels)))

    final = tr.pruned[-1]
    restored = tr.restored.data
    dropped = np.setdiff1d(np.arange(h0.tokens), final.token_ids)
    ok = np.array_equal(restored[final.token_ids], final.data) and not np.any(restored[dropped])
    results.append(CheckResult("restore keeps survivors, zeroes the rest", ok))

    full = mls_trace(h0, weights, dataclasses.replace(config, keep_ratio=1.0))
    ok = (np.array_equal(pad_restore(full.pruned[-1], h0.tokens).data, full.pruned[-1].data)
          and np.array_equal(full.pruned[-1].data, full.levels[-1].data))
    results.append(CheckResult("keep_ratio=1: restore is identity, streams coincide", ok))

    again = mls_trace(embed(*random_patches(config), init_weights(config), config), init_weights(config), config)
    results.append(CheckResult(
        "deterministic", checksum(again.output.data) == checksum(out.data)))

    if gradients:
        results.extend(_toy_gradient_checks(config))

    sweep = gamma_sweep(h0, weights, config)
    distinct = len({s["sha256"] for s in sweep})
    results.append(CheckResult("gamma sweep checksums distinct", distinct == len(sweep),
                               f"{distinct}/{len(sweep)} distinct"))

    payload = {
        "config": config.to_dict(),
        "checks": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
        "gamma_sweep": sweep,
        "diagnostics": diagnostic_dump(h0, weights, config),
    }
    return results, payload
