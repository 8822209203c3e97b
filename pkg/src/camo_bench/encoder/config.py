"""Encoder configuration and its key=value file format."""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from camo_bench.errors import ConfigError


def default_mlp_dims(n_blocks: int) -> tuple[int, ...]:
    """Halve the level axis down to 3 or fewer, then map to 1: 12 -> 6 -> 3 -> 1."""
    dims = [n_blocks]
    d = n_blocks
    while d > 3:
        d //= 2
        dims.append(d)
    if dims[-1] != 1:
        dims.append(1)
    return tuple(dims)


@dataclass(frozen=True)
class EncoderConfig:
    """Shape and schedule of the multi-level encoder.

    ``prune_at`` holds 1-based block numbers; the default (4, 7, 10) prunes
    after the 4th, 7th and 10th of 12 blocks.
    """

    n_blocks: int = 12
    embed_dim: int = 16
    n_heads: int = 2
    n_template_tokens: int = 4
    n_search_tokens: int = 16
    patch_dim: int = 12
    mlp_ratio: int = 4
    keep_ratio: float = 0.7
    prune_at: tuple[int, ...] = (4, 7, 10)
    gamma: float = 0.1
    mlp_dims: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "prune_at", tuple(sorted(set(int(b) for b in self.prune_at))))
        if self.mlp_dims is None:
            object.__setattr__(self, "mlp_dims", default_mlp_dims(self.n_blocks))
        else:
            object.__setattr__(self, "mlp_dims", tuple(int(d) for d in self.mlp_dims))
        self._validate()

    def _validate(self):
        for name in ("n_blocks", "embed_dim", "n_heads", "n_template_tokens", "n_search_tokens",
                     "patch_dim", "mlp_ratio"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.n_blocks < 2:
            raise ConfigError("n_blocks must be at least 2 for a level-axis reduction")
        if self.embed_dim % self.n_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} is not divisible by n_heads {self.n_heads}")
        if not (math.isfinite(self.gamma) and 0.0 <= self.gamma <= 1.0):
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma!r}")
        if not (math.isfinite(self.keep_ratio) and 0.0 < self.keep_ratio <= 1.0):
            raise ConfigError(f"keep_ratio must lie in (0, 1], got {self.keep_ratio!r}")
        bad = [b for b in self.prune_at if not 1 <= b <= self.n_blocks]
        if bad:
            raise ConfigError(f"prune_at blocks {bad} outside 1..{self.n_blocks}")
        dims = self.mlp_dims
        if len(dims) < 2 or dims[0] != self.n_blocks or dims[-1] != 1:
            raise ConfigError(f"mlp_dims must run from n_blocks={self.n_blocks} down to 1, got {list(dims)}")
        if any(b >= a for a, b in zip(dims, dims[1:])):
            raise ConfigError(f"mlp_dims must be strictly decreasing, got {list(dims)}")

    @property
    def n_tokens(self) -> int:
        return self.n_template_tokens + self.n_search_tokens

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads

    def replace(self, **changes) -> "EncoderConfig":
        if "n_blocks" in changes and "mlp_dims" not in changes:
            changes["mlp_dims"] = None
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["prune_at"] = list(self.prune_at)
        d["mlp_dims"] = list(self.mlp_dims)
        return d


_INT_KEYS = {"n_blocks", "embed_dim", "n_heads", "n_template_tokens", "n_search_tokens",
             "patch_dim", "mlp_ratio", "seed"}
_FLOAT_KEYS = {"gamma", "keep_ratio"}
_LIST_KEYS = {"prune_at", "mlp_dims"}


def parse_config(text: str) -> EncoderConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string("[encoder]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    kwargs = {}
    for key, raw in parser["encoder"].items():
        raw = raw.strip()
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(raw)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(raw)
            elif key in _LIST_KEYS:
                kwargs[key] = tuple(int(t) for t in raw.replace(" ", "").split(",") if t)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return EncoderConfig(**kwargs)


def load_config(path) -> EncoderConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    return parse_config(text)


def format_config(config: EncoderConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
