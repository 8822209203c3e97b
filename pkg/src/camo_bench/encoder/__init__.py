"""Reference multi-level feature encoder, numpy float64."""

from camo_bench.encoder.blocks import block_forward, block_forward_ce, pad_restore
from camo_bench.encoder.config import EncoderConfig, load_config, parse_config
from camo_bench.encoder.fusion import level_fusion_mlp
from camo_bench.encoder.gradcheck import finite_difference_check
from camo_bench.encoder.mls import embed, mls_backward, mls_forward, mls_trace
from camo_bench.encoder.tensors import FeatureTensor, checksum
from camo_bench.encoder.weights import BlockWeights, EncoderWeights, FusionWeights, init_weights

__all__ = [
    "BlockWeights",
    "EncoderConfig",
    "EncoderWeights",
    "FeatureTensor",
    "FusionWeights",
    "block_forward",
    "block_forward_ce",
    "checksum",
    "embed",
    "finite_difference_check",
    "init_weights",
    "level_fusion_mlp",
    "load_config",
    "mls_backward",
    "mls_forward",
    "mls_trace",
    "pad_restore",
    "parse_config",
]
