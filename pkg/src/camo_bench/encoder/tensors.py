from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """tokens x channels features plus each row's position in the unpruned sequence.

    Template tokens come first and are never pruned, so the first
    ``n_template`` rows are always the template.
    """

    data: np.ndarray
    token_ids: np.ndarray
    n_template: int

    def __post_init__(self):
        data = _readonly(self.data)
        if data.ndim != 2:
            raise ValueError(f"feature data must be 2-D, got shape {data.shape}")
        ids = np.array(self.token_ids, dtype=np.int64).reshape(-1)
        ids.setflags(write=False)
        if len(ids) != data.shape[0]:
            raise ValueError(f"{len(ids)} token ids for {data.shape[0]} rows")
        if len(ids) > 1 and np.any(np.diff(ids) <= 0):
            raise ValueError("token ids must be distinct and ascending")
        if len(ids) and ids[0] < 0:
            raise ValueError("token ids must be non-negative")
        if not 0 <= self.n_template <= len(ids) or np.any(ids[: self.n_template] != np.arange(self.n_template)):
            raise ValueError("template tokens must occupy the leading rows and ids")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "token_ids", ids)

    @classmethod
    def full(cls, data, n_template: int) -> "FeatureTensor":
        data = np.asarray(data, dtype=np.float64)
        return cls(data, np.arange(data.shape[0]), n_template)

    @property
    def tokens(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_search(self) -> int:
        return self.tokens - self.n_template

    def with_data(self, data) -> "FeatureTensor":
        return FeatureTensor(data, self.token_ids, self.n_template)


def checksum(a: np.ndarray) -> str:
    """sha256 over little-endian float64 bytes; bit-exact fingerprint."""
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()
