"""Evaluation toolkit for camouflaged-object tracking benchmarks."""

from camo_bench.dataset import (
    ATTRIBUTES,
    AttributeSet,
    BoundingBox,
    Dataset,
    FrameAnnotation,
    Sequence,
    co_occurrence,
    derive_frame_attributes,
    load_dataset,
    parse_sequence,
    validate_rules,
)
from camo_bench.metrics import (
    EvaluationReport,
    MetricCurve,
    TrackerResult,
    evaluate,
    rank_trackers,
)

__version__ = "0.1.0"

__all__ = [
    "ATTRIBUTES",
    "AttributeSet",
    "BoundingBox",
    "Dataset",
    "EvaluationReport",
    "FrameAnnotation",
    "MetricCurve",
    "Sequence",
    "TrackerResult",
    "co_occurrence",
    "derive_frame_attributes",
    "evaluate",
    "load_dataset",
    "parse_sequence",
    "rank_trackers",
    "validate_rules",
]
