"""Deterministic stand-in trackers with analytically known scores."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from camo_bench.dataset import Dataset, Sequence, format_number
from camo_bench.metrics import TrackerResult

KINDS = ("oracle", "constant_offset", "scaled", "noisy", "lost_after")


@dataclass(frozen=True)
class SyntheticTracker:
    kind: str
    dx: float = 0.0
    dy: float = 0.0
    scale: float = 1.0
    sigma: float = 0.0
    seed: int = 0
    k: int = 0
    label: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown tracker kind {self.kind!r}")
        if self.kind == "scaled" and not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.kind == "noisy" and self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.kind == "lost_after" and self.k < 0:
            raise ValueError("k must be non-negative")

    @classmethod
    def oracle(cls):
        return cls("oracle")

    @classmethod
    def constant_offset(cls, dx, dy):
        return cls("constant_offset", dx=float(dx), dy=float(dy))

    @classmethod
    def scaled(cls, s):
        return cls("scaled", scale=float(s))

    @classmethod
    def noisy(cls, sigma, seed=0):
        return cls("noisy", sigma=float(sigma), seed=int(seed))

    @classmethod
    def lost_after(cls, k):
        return cls("lost_after", k=int(k))

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        f = format_number
        return {
            "oracle": "oracle",
            "constant_offset": f"offset_{f(self.dx)}_{f(self.dy)}",
            "scaled": f"scaled_{f(self.scale)}",
            "noisy": f"noisy_{f(self.sigma)}_s{self.seed}",
            "lost_after": f"lost_after_{self.k}",
        }[self.kind]


def oracle_boxes(seq: Sequence) -> np.ndarray:
    """Ground truth with gaps filled: an absent frame repeats the last present box.

    Leading absent frames take the first present box.
    """
    gt = seq.gt_array()
    present = np.flatnonzero(np.all(np.isfinite(gt), axis=1))
    if len(present) == 0:
        fill = np.array([0.0, 0.0, 1.0, 1.0])
        return np.tile(fill, (len(gt), 1))
    out = gt.copy()
    last = gt[present[0]]
    for i in range(len(out)):
        if np.all(np.isfinite(out[i])):
            last = out[i]
        else:
            out[i] = last
    return out


def _predict(t: SyntheticTracker, seq: Sequence, seq_index: int) -> np.ndarray:
    base = oracle_boxes(seq)
    if t.kind == "oracle":
        return base
    if t.kind == "constant_offset":
        return base + np.array([t.dx, t.dy, 0.0, 0.0])
    if t.kind == "scaled":
        cx = base[:, 0] + base[:, 2] / 2
        cy = base[:, 1] + base[:, 3] / 2
        w, h = base[:, 2] * t.scale, base[:, 3] * t.scale
        return np.stack([cx - w / 2, cy - h / 2, w, h], axis=1)
    if t.kind == "noisy":
        # one stream per sequence, so results do not depend on dataset order
        rng = np.random.default_rng([t.seed, seq_index])
        return base + np.column_stack([rng.normal(0.0, t.sigma, size=(len(base), 2)), np.zeros((len(base), 2))])
    idx = np.minimum(np.arange(len(base)), min(t.k, len(base) - 1))
    return base[idx]


def run_tracker(t: SyntheticTracker, ds: Dataset) -> TrackerResult:
    preds = {}
    for seq in ds.sequences:
        preds[seq.name] = _predict(t, seq, _stable_index(seq.name))
    return TrackerResult(t.name, preds)


def _stable_index(name: str) -> int:
    # crc32 rather than hash(): str hashing is salted per process
    return zlib.crc32(name.encode())
