"""Parameter containers and seeded initialisation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from camo_bench.encoder.config import EncoderConfig

INIT_STD = 0.02


def _freeze(value):
    a = np.array(value, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("weights must be finite")
    a.setflags(write=False)
    return a


class _ParamSet:
    """Mixin: array fields are copied read-only; dict round trip for gradient code."""

    def __post_init__(self):
        for f in dataclasses.fields(self):
            object.__setattr__(self, f.name, _freeze(getattr(self, f.name)))

    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def map(self, fn):
        return type(self)(**{k: fn(v) for k, v in self.as_dict().items()})


@dataclass(frozen=True, eq=False)
class BlockWeights(_ParamSet):
    """One pre-norm transformer block. Linear maps are ``x @ W + b``."""

    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        super().__post_init__()
        d, hid = self.wq.shape[0], self.w1.shape[1]
        expected = {
            "ln1_g": (d,), "ln1_b": (d,), "wq": (d, d), "bq": (d,), "wk": (d, d), "bk": (d,),
            "wv": (d, d), "bv": (d,), "wo": (d, d), "bo": (d,), "ln2_g": (d,), "ln2_b": (d,),
            "w1": (d, hid), "b1": (hid,), "w2": (hid, d), "b2": (d,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def embed_dim(self) -> int:
        return self.wq.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @classmethod
    def zeros(cls, dim: int, hidden: int) -> "BlockWeights":
        z = np.zeros
        return cls(z(dim), z(dim), z((dim, dim)), z(dim), z((dim, dim)), z(dim), z((dim, dim)), z(dim),
                   z((dim, dim)), z(dim), z(dim), z(dim), z((dim, hidden)), z(hidden), z((hidden, dim)), z(dim))


@dataclass(frozen=True, eq=False)
class FusionWeights:
    """Level-axis MLP: layer ``i`` maps ``dims[i] -> dims[i+1]``."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(_freeze(w) for w in self.weights)
        bs = tuple(_freeze(b) for b in self.biases)
        if len(ws) != len(bs) or not ws:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and ws[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i} input {w.shape[0]} != previous output {ws[i - 1].shape[1]}")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def as_dict(self) -> dict[str, np.ndarray]:
        d = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            d[f"w{i}"] = w
            d[f"b{i}"] = b
        return d

    @classmethod
    def from_dict(cls, d) -> "FusionWeights":
        n = len(d) // 2
        return cls(tuple(d[f"w{i}"] for i in range(n)), tuple(d[f"b{i}"] for i in range(n)))

    @classmethod
    def constant(cls, dims, value: float) -> "FusionWeights":
        return cls(
            tuple(np.full((a, b), float(value)) for a, b in zip(dims, dims[1:])),
            tuple(np.zeros(b) for b in dims[1:]),
        )


@dataclass(frozen=True, eq=False)
class EncoderWeights:
    patch_w: np.ndarray
    patch_b: np.ndarray
    pos_embed: np.ndarray
    blocks: tuple[BlockWeights, ...]
    fusion: FusionWeights

    def __post_init__(self):
        object.__setattr__(self, "patch_w", _freeze(self.patch_w))
        object.__setattr__(self, "patch_b", _freeze(self.patch_b))
        object.__setattr__(self, "pos_embed", _freeze(self.pos_embed))
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def replace(self, **changes) -> "EncoderWeights":
        return dataclasses.replace(self, **changes)


def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal(0, std) redrawn until every entry lies within two std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while np.any(bad):
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def init_block(rng: np.random.Generator, dim: int, hidden: int, std: float = INIT_STD) -> BlockWeights:
    tn = lambda *shape: trunc_normal(rng, shape, std)  # noqa: E731
    return BlockWeights(
        ln1_g=np.ones(dim), ln1_b=np.zeros(dim),
        wq=tn(dim, dim), bq=np.zeros(dim),
        wk=tn(dim, dim), bk=np.zeros(dim),
        wv=tn(dim, dim), bv=np.zeros(dim),
        wo=tn(dim, dim), bo=np.zeros(dim),
        ln2_g=np.ones(dim), ln2_b=np.zeros(dim),
        w1=tn(dim, hidden), b1=np.zeros(hidden),
        w2=tn(hidden, dim), b2=np.zeros(dim),
    )


def init_fusion(rng: np.random.Generator, dims, std: float = INIT_STD) -> FusionWeights:
    return FusionWeights(
        tuple(trunc_normal(rng, (a, b), std) for a, b in zip(dims, dims[1:])),
        tuple(np.zeros(b) for b in dims[1:]),
    )


def init_weights(config: EncoderConfig, std: float = INIT_STD) -> EncoderWeights:
    """Seeded truncated-normal weights, zero biases, unit norm gains."""
    rng = np.random.default_rng(config.seed)
    dim = config.embed_dim
    hidden = dim * config.mlp_ratio
    return EncoderWeights(
        patch_w=trunc_normal(rng, (config.patch_dim, dim), std),
        patch_b=np.zeros(dim),
        pos_embed=trunc_normal(rng, (config.n_tokens, dim), std),
        blocks=tuple(init_block(rng, dim, hidden, std) for _ in range(config.n_blocks)),
        fusion=init_fusion(rng, config.mlp_dims, std),
    )
