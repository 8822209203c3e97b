import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camo_bench.encoder import (
    BlockWeights,
    EncoderConfig,
    FeatureTensor,
    FusionWeights,
    block_forward,
    block_forward_ce,
    checksum,
    embed,
    init_weights,
    level_fusion_mlp,
    mls_forward,
    mls_trace,
    pad_restore,
    parse_config,
)
from camo_bench.encoder.blocks import block_core, keep_count
from camo_bench.encoder.checks import GRADCHECK_STD, run_encoder_checks
from camo_bench.encoder.config import default_mlp_dims, format_config, load_config
from camo_bench.encoder.gradcheck import (
    check_block,
    check_block_ce,
    check_level_fusion,
    check_linear,
    check_mls,
    finite_difference_check,
)
from camo_bench.encoder.mls import random_patches
from camo_bench.encoder.weights import init_block, init_fusion
from camo_bench.errors import ConfigError, NonFiniteError

from oracles import block_loops

SMALL = EncoderConfig(n_blocks=12, embed_dim=8, n_heads=2, n_template_tokens=4, n_search_tokens=12, patch_dim=6)


def setup(config=SMALL, std=0.02):
    weights = init_weights(config, std=std)
    return embed(*random_patches(config), weights, config), weights


def random_block(rng, dim, hidden, std=0.3):
    return init_block(rng, dim, hidden, std=std).map(lambda a: a + rng.normal(0, 0.1, a.shape))


# -- config -------------------------------------------------------------------------

def test_default_schedule():
    c = EncoderConfig()
    assert c.mlp_dims == (12, 6, 3, 1)
    assert c.gamma == 0.1 and c.keep_ratio == 0.7 and c.prune_at == (4, 7, 10)
    assert default_mlp_dims(8) == (8, 4, 2, 1)
    assert default_mlp_dims(2) == (2, 1)


@pytest.mark.parametrize("dims", [(6, 3, 1), (12, 6, 3), (12, 6, 3, 2), (12, 12, 1), (12, 3, 6, 1), (1,), (24, 12, 6, 3, 1)])
def test_schedule_rejected(dims):
    with pytest.raises(ConfigError):
        EncoderConfig(mlp_dims=dims)


@pytest.mark.parametrize("change", [{"gamma": 1.5}, {"gamma": -0.1}, {"keep_ratio": 0.0}, {"keep_ratio": 1.2},
                                    {"prune_at": (0,)}, {"prune_at": (13,)}, {"embed_dim": 7}, {"n_blocks": 1}])
def test_invariants_rejected(change):
    with pytest.raises(ConfigError):
        EncoderConfig(**change)


def test_config_file_roundtrip(tmp_path):
    c = EncoderConfig(n_blocks=6, gamma=0.25, keep_ratio=0.5, prune_at=(2, 4), seed=9)
    assert parse_config(format_config(c)) == c
    path = tmp_path / "enc.cfg"
    path.write_text("n_blocks = 12\ngamma = 0.3  # comment\nprune_at = 3, 6\n")
    assert load_config(path) == EncoderConfig(gamma=0.3, prune_at=(3, 6))


@pytest.mark.parametrize("text", ["colour=red\n", "gamma=abc\n", "gamma=1.5\n", "no equals sign\n"])
def test_bad_config_text(text):
    with pytest.raises(ConfigError):
        parse_config(text)


# -- embedding ---------------------------------------------------------------------------

def test_embed_shape_and_determinism():
    c = EncoderConfig(embed_dim=8, n_template_tokens=4, n_search_tokens=12)
    w = init_weights(c)
    t, s = random_patches(c)
    h = embed(t, s, w, c)
    assert h.data.shape == (16, 8) and h.n_template == 4
    again = embed(t, s, init_weights(c), c)
    assert checksum(again.data) == checksum(h.data)


def test_embed_rejects_bad_shapes():
    c = SMALL
    w = init_weights(c)
    t, s = random_patches(c)
    with pytest.raises(ValueError):
        embed(t, s[:0], w, c)
    with pytest.raises(ValueError):
        embed(t, s[:-1], w, c)
    with pytest.raises(ValueError):
        embed(t[:, :-1], s, w, c)


# -- block --------------------------------------------------------------------------------

def test_zero_block_is_identity(rng):
    h = FeatureTensor.full(rng.normal(size=(10, 8)), 3)
    out = block_forward(h, BlockWeights.zeros(8, 32))
    assert np.array_equal(out.data, h.data)
    assert np.array_equal(out.token_ids, h.token_ids)


@pytest.mark.parametrize("heads", [1, 2, 4])
def test_block_matches_loop_oracle(rng, heads):
    w = random_block(rng, 8, 16)
    x = rng.normal(size=(7, 8))
    got = block_forward(FeatureTensor.full(x, 2), w, heads).data
    want = np.array(block_loops(x.tolist(), {k: v.tolist() for k, v in w.as_dict().items()}, heads))
    assert np.max(np.abs(got - want)) <= 1e-12


def test_block_fails_fast_on_nonfinite(rng):
    x = rng.normal(size=(3, 4))
    x[1, 2] = np.nan
    with pytest.raises(NonFiniteError):
        block_forward(FeatureTensor.full(x, 1), random_block(rng, 4, 8))


# -- candidate elimination ---------------------------------------------------------------

@pytest.mark.parametrize("ratio,s,k", [(0.5, 12, 6), (1.0, 12, 12), (0.7, 10, 7), (0.7, 16, 12), (0.01, 12, 1), (0.7, 1, 1)])
def test_keep_count(ratio, s, k):
    assert keep_count(ratio, s) == k


@pytest.mark.parametrize("ratio", [0.0, -0.5, 1.5])
def test_keep_ratio_out_of_range(ratio, rng):
    h = FeatureTensor.full(rng.normal(size=(6, 4)), 2)
    with pytest.raises(ValueError):
        block_forward_ce(h, random_block(rng, 4, 8), ratio)


def test_keep_ratio_one_is_plain_block(rng):
    h = FeatureTensor.full(rng.normal(size=(16, 8)), 4)
    w = random_block(rng, 8, 16)
    a, b = block_forward_ce(h, w, 1.0, 2), block_forward(h, w, 2)
    assert np.array_equal(a.data, b.data) and np.array_equal(a.token_ids, b.token_ids)


def test_half_keep_leaves_six_of_twelve(rng):
    h = FeatureTensor.full(rng.normal(size=(16, 8)), 4)
    out = block_forward_ce(h, random_block(rng, 8, 16), 0.5)
    assert out.n_search == 6 and out.n_template == 4
    assert list(out.token_ids[:4]) == [0, 1, 2, 3]
    assert np.all(np.diff(out.token_ids) > 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 11), st.floats(0.01, 1.0), st.integers(0, 2**16))
def test_engineered_attention_survivor(j, ratio, seed):
    """Search token j copies the template direction, so template queries attend to it most."""
    rng = np.random.default_rng(seed)
    d, nt = 8, 4
    u = rng.normal(size=d)
    x = rng.normal(size=(nt + 12, d))
    x[:nt] = u
    x[nt + j] = u
    w = BlockWeights.zeros(d, 16)
    w = dataclasses.replace(w, ln1_g=np.ones(d), wq=np.eye(d) * 3, wk=np.eye(d) * 3)
    out = block_forward_ce(FeatureTensor.full(x, nt), w, ratio)
    assert nt + j in out.token_ids


def test_ties_go_to_lower_id():
    # all search tokens identical -> equal scores -> lowest ids kept
    d = 4
    x = np.zeros((2 + 6, d))
    x[:, 0] = 1.0
    x[:, 1] = -1.0
    out = block_forward_ce(FeatureTensor.full(x, 2), BlockWeights.zeros(d, 8), 0.5)
    assert list(out.token_ids) == [0, 1, 2, 3, 4]


# -- restore ----------------------------------------------------------------------------------

def test_restore_identity_without_pruning(rng):
    h = FeatureTensor.full(rng.normal(size=(9, 3)), 2)
    assert np.array_equal(pad_restore(h, 9).data, h.data)


def test_restore_single_survivor(rng):
    data = rng.normal(size=(3, 4))
    h = FeatureTensor(data, [0, 1, 7], 2)
    out = pad_restore(h, 10).data
    assert np.array_equal(out[[0, 1, 7]], data)
    assert not np.any(np.delete(out, [0, 1, 7], axis=0))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 20), st.data())
def test_restore_random_patterns(nt, ns, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**16)))
    n = nt + ns
    full = rng.normal(size=(n, 3))
    keep = data.draw(st.lists(st.integers(nt, n - 1), unique=True))
    ids = np.array(sorted(range(nt)) + sorted(keep))
    out = pad_restore(FeatureTensor(full[ids], ids, nt), n).data
    for row in range(n):
        if row in ids:
            assert np.array_equal(out[row], full[row])
        else:
            assert not np.any(out[row])


def test_restore_rejects_out_of_range(rng):
    with pytest.raises(ValueError):
        pad_restore(FeatureTensor(rng.normal(size=(3, 2)), [0, 1, 9], 1), 5)


def test_feature_tensor_rejects_bad_ids(rng):
    with pytest.raises(ValueError):
        FeatureTensor(rng.normal(size=(3, 2)), [0, 2, 2], 1)
    with pytest.raises(ValueError):
        FeatureTensor(rng.normal(size=(3, 2)), [0, 3, 2], 1)


# -- level fusion ----------------------------------------------------------------------------

@pytest.mark.parametrize("c", [0.5, 1.0, 0.1])
def test_fusion_constant_weights(rng, c):
    t = rng.uniform(0.1, 2.0, size=(5, 4))
    levels = [FeatureTensor.full(t, 1)] * 12
    out = level_fusion_mlp(levels, FusionWeights.constant((12, 6, 3, 1), c))
    # 12c * T, then 6c * 12c * T, then 3c * 72c^2 * T
    assert np.allclose(out.data, 216 * c**3 * t, rtol=1e-14, atol=0)


def test_fusion_zero_stack(rng):
    fw = init_fusion(rng, (12, 6, 3, 1), std=0.5)
    out = level_fusion_mlp([FeatureTensor.full(np.zeros((4, 3)), 1)] * 12, fw)
    assert out.data.shape == (4, 3) and not np.any(out.data)


def test_fusion_level_count_mismatch(rng):
    fw = init_fusion(rng, (12, 6, 3, 1))
    with pytest.raises(ValueError):
        level_fusion_mlp([FeatureTensor.full(np.ones((4, 3)), 1)] * 11, fw)


def test_fusion_shape_mismatch(rng):
    fw = init_fusion(rng, (2, 1))
    with pytest.raises(ValueError):
        level_fusion_mlp([FeatureTensor.full(np.ones((4, 3)), 1), FeatureTensor.full(np.ones((5, 3)), 1)], fw)


# -- full encoder -----------------------------------------------------------------------------

def test_gamma_zero_is_restored_pruning_stream():
    h0, w = setup()
    tr = mls_trace(h0, w, SMALL.replace(gamma=0.0))
    assert np.array_equal(tr.output.data, pad_restore(tr.pruned[-1], h0.tokens).data)


def test_gamma_one_is_fusion():
    h0, w = setup()
    tr = mls_trace(h0, w, SMALL.replace(gamma=1.0))
    assert np.array_equal(tr.output.data, level_fusion_mlp(tr.levels, w.fusion).data)


def test_keep_ratio_one_streams_coincide():
    cfg = SMALL.replace(keep_ratio=1.0, gamma=0.37)
    h0, w = setup(cfg)
    tr = mls_trace(h0, w, cfg)
    assert np.array_equal(pad_restore(tr.pruned[-1], h0.tokens).data, tr.pruned[-1].data)
    assert np.array_equal(tr.pruned[-1].data, tr.levels[-1].data)
    want = (1 - 0.37) * tr.levels[-1].data + 0.37 * level_fusion_mlp(tr.levels, w.fusion).data
    assert np.array_equal(tr.output.data, want)


def test_affine_in_gamma():
    h0, w = setup(std=0.3)
    f = {g: mls_forward(h0, w, SMALL.replace(gamma=g)).data for g in (0.0, 0.5, 1.0)}
    assert np.max(np.abs(f[0.5] - (f[0.0] + f[1.0]) / 2)) <= 1e-12


def test_forward_deterministic():
    a = mls_forward(*setup(), SMALL)
    b = mls_forward(*setup(), SMALL)
    assert checksum(a.data) == checksum(b.data)


def test_token_counts_along_streams():
    h0, w = setup()
    tr = mls_trace(h0, w, SMALL)
    assert [t.tokens for t in tr.pruned] == [16, 16, 16, 4 + 9, 13, 13, 4 + 7, 11, 11, 4 + 5, 9, 9]
    assert all(t.tokens == 16 for t in tr.levels)


@st.composite
def configs(draw):
    n_blocks = draw(st.integers(2, 12))
    heads = draw(st.sampled_from([1, 2]))
    return EncoderConfig(
        n_blocks=n_blocks,
        embed_dim=heads * draw(st.integers(1, 4)),
        n_heads=heads,
        n_template_tokens=draw(st.integers(1, 4)),
        n_search_tokens=draw(st.integers(1, 12)),
        patch_dim=draw(st.integers(1, 6)),
        mlp_ratio=draw(st.integers(1, 4)),
        keep_ratio=draw(st.floats(0.05, 1.0)),
        prune_at=tuple(draw(st.sets(st.integers(1, n_blocks), max_size=4))),
        gamma=draw(st.floats(0.0, 1.0)),
        seed=draw(st.integers(0, 1000)),
    )


@settings(max_examples=50, deadline=None)
@given(configs())
def test_random_config_shapes(cfg):
    h0, w = setup(cfg)
    tr = mls_trace(h0, w, cfg)
    assert tr.output.data.shape == h0.data.shape
    counts = [h0.tokens] + [t.tokens for t in tr.pruned]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert all(t.data.shape == h0.data.shape for t in tr.levels)
    assert all(t.n_template == cfg.n_template_tokens for t in tr.pruned)


def test_mismatched_weights_rejected():
    h0, w = setup()
    with pytest.raises(ConfigError):
        mls_forward(h0, w, SMALL.replace(n_blocks=6))


# -- gradients ----------------------------------------------------------------------------------

def test_linear_gradient(rng):
    assert check_linear(rng.normal(size=(5, 3)), rng.normal(size=(3, 4)), rng.normal(size=4)) < 1e-9


def test_level_fusion_gradient(rng):
    fw = init_fusion(rng, (12, 6, 3, 1), std=GRADCHECK_STD)
    fw = FusionWeights(fw.weights, tuple(rng.normal(0, 0.1, b.shape) for b in fw.biases))
    assert check_level_fusion(rng.normal(size=(12, 4, 3)), fw) < 1e-6


@pytest.mark.parametrize("heads", [1, 2])
def test_block_gradient(rng, heads):
    assert check_block(rng.normal(size=(6, 8)), random_block(rng, 8, 16), heads) < 1e-5


def test_eliminating_block_gradient(rng):
    h = FeatureTensor.full(rng.normal(size=(16, 8)), 4)
    assert check_block_ce(h, random_block(rng, 8, 16), 0.5, 2) < 1e-5


def test_full_encoder_gradient():
    cfg = EncoderConfig(n_blocks=4, embed_dim=4, n_heads=1, n_template_tokens=2, n_search_tokens=6,
                        patch_dim=3, mlp_ratio=2, prune_at=(2, 3), keep_ratio=0.6, gamma=0.4, seed=5)
    w = init_weights(cfg, std=GRADCHECK_STD)
    h0 = embed(*random_patches(cfg), w, cfg)
    assert check_mls(h0, w, cfg, per_param=4) < 1e-5


def test_nonfinite_gradient_raises():
    def fwd(p):
        return p["x"]

    def bwd(p):
        return {"x": np.full_like(p["x"], np.nan)}

    with pytest.raises(NonFiniteError):
        finite_difference_check(fwd, bwd, {"x": np.ones(3)})


# -- self-check suite ----------------------------------------------------------------------------

def test_default_suite_passes():
    results, payload = run_encoder_checks(EncoderConfig())
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]
    assert len({s["sha256"] for s in payload["gamma_sweep"]}) == 10
    assert [s["gamma"] for s in payload["gamma_sweep"]] == [round(0.1 * i, 1) for i in range(1, 11)]
    dump = payload["diagnostics"]
    assert len(dump["levels"]) == 12 and dump["output"]["shape"] == [20, 16]
