"""One-pass evaluation: precision, normalized precision and success curves.

Only frames whose ground truth is present enter a metric. Scores are
computed over the pooled frames of all sequences in scope, or, with
``aggregation="averaged"``, from the mean of per-sequence curves.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence as Seq

import numpy as np

from camo_bench.dataset import ATTRIBUTES, BoundingBox, Dataset, Sequence, attribute_index
from camo_bench.errors import EmptyEvaluationError, FormatError

PRC_THRESHOLD = 20.0
PRECISION_THRESHOLDS = np.arange(51, dtype=np.float64)
# i/20 and i/200 keep 0.25 and friends exactly representable
SUCCESS_THRESHOLDS = np.arange(21, dtype=np.float64) / 20
NORM_PRECISION_THRESHOLDS = np.arange(101, dtype=np.float64) / 200

AGGREGATIONS = ("pooled", "averaged")
RANK_KEYS = ("prc", "auc", "nprc")


# Non-finite boxes cannot reach these: BoundingBox rejects them on construction.

def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # (y + h) - y can round above h, so clamp
    return min(1.0, inter / (a.w * a.h + b.w * b.h - inter))


def center_error(a: BoundingBox, b: BoundingBox) -> float:
    return math.hypot((a.x + a.w / 2) - (b.x + b.w / 2), (a.y + a.h / 2) - (b.y + b.h / 2))


def normalized_center_error(pred: BoundingBox, gt: BoundingBox) -> float:
    if gt.w <= 0 or gt.h <= 0:
        raise ValueError("ground-truth box is degenerate")
    dx = ((pred.x + pred.w / 2) - (gt.x + gt.w / 2)) / gt.w
    dy = ((pred.y + pred.h / 2) - (gt.y + gt.h / 2)) / gt.h
    return math.hypot(dx, dy)


# Vectorised twins of the scalar functions above, (n, 4) xywh arrays in.

def iou_array(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    iw = np.minimum(pred[:, 0] + pred[:, 2], gt[:, 0] + gt[:, 2]) - np.maximum(pred[:, 0], gt[:, 0])
    ih = np.minimum(pred[:, 1] + pred[:, 3], gt[:, 1] + gt[:, 3]) - np.maximum(pred[:, 1], gt[:, 1])
    overlap = (iw > 0) & (ih > 0)
    inter = np.where(overlap, iw * ih, 0.0)
    union = pred[:, 2] * pred[:, 3] + gt[:, 2] * gt[:, 3] - inter
    return np.where(overlap, np.minimum(1.0, inter / union), 0.0)


def center_error_array(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    dx = (pred[:, 0] + pred[:, 2] / 2) - (gt[:, 0] + gt[:, 2] / 2)
    dy = (pred[:, 1] + pred[:, 3] / 2) - (gt[:, 1] + gt[:, 3] / 2)
    return np.hypot(dx, dy)


def normalized_center_error_array(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    dx = ((pred[:, 0] + pred[:, 2] / 2) - (gt[:, 0] + gt[:, 2] / 2)) / gt[:, 2]
    dy = ((pred[:, 1] + pred[:, 3] / 2) - (gt[:, 1] + gt[:, 3] / 2)) / gt[:, 3]
    return np.hypot(dx, dy)


@dataclass(frozen=True)
class MetricCurve:
    thresholds: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.thresholds) != len(self.values):
            raise ValueError("thresholds and values differ in length")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly ascending")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ValueError("curve values must lie in [0, 1]")

    def at(self, threshold: float) -> float:
        return self.values[self.thresholds.index(float(threshold))]

    def mean(self) -> float:
        return float(np.mean(self.values))

    def to_dict(self) -> dict:
        return {"thresholds": list(self.thresholds), "values": list(self.values)}


@dataclass(frozen=True)
class TrackerResult:
    """Predictions of one tracker: sequence name -> (n_frames, 4) xywh array."""

    tracker_name: str
    predictions: Mapping[str, np.ndarray]

    def __post_init__(self):
        frozen = {}
        for name, boxes in self.predictions.items():
            arr = np.array([b.as_tuple() if isinstance(b, BoundingBox) else b for b in boxes],
                           dtype=np.float64).reshape(-1, 4)
            if not np.all(np.isfinite(arr)):
                raise FormatError(f"tracker {self.tracker_name!r}, sequence {name!r}: non-finite prediction")
            if np.any(arr[:, 2:] <= 0):
                raise FormatError(f"tracker {self.tracker_name!r}, sequence {name!r}: prediction with w or h <= 0")
            arr.setflags(write=False)
            frozen[name] = arr
        object.__setattr__(self, "predictions", frozen)

    def boxes(self, seq_name: str) -> np.ndarray:
        try:
            return self.predictions[seq_name]
        except KeyError:
            raise KeyError(f"tracker {self.tracker_name!r} has no result for sequence {seq_name!r}") from None


@dataclass(frozen=True)
class FrameErrors:
    """Per-frame errors of the evaluable (gt-present) frames of one sequence."""

    center: np.ndarray
    normalized: np.ndarray
    overlap: np.ndarray

    def __len__(self):
        return len(self.center)

    @classmethod
    def concat(cls, parts: Iterable["FrameErrors"]) -> "FrameErrors":
        parts = list(parts)
        if not parts:
            empty = np.zeros(0)
            return cls(empty, empty, empty)
        return cls(
            np.concatenate([p.center for p in parts]),
            np.concatenate([p.normalized for p in parts]),
            np.concatenate([p.overlap for p in parts]),
        )


def sequence_errors(tr: TrackerResult, seq: Sequence) -> FrameErrors:
    pred = tr.boxes(seq.name)
    if len(pred) != len(seq.frames):
        raise FormatError(
            f"tracker {tr.tracker_name!r}, sequence {seq.name!r}: "
            f"{len(pred)} predictions for {len(seq.frames)} frames"
        )
    gt = seq.gt_array()
    mask = seq.present_mask() & np.all(np.isfinite(gt), axis=1)
    p, g = pred[mask], gt[mask]
    return FrameErrors(center_error_array(p, g), normalized_center_error_array(p, g), iou_array(p, g))


def _thread_count() -> int:
    raw = os.environ.get("CAMO_BENCH_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def collect_errors(tr: TrackerResult, seqs: Seq[Sequence]) -> dict[str, FrameErrors]:
    """Per-sequence errors, keyed by name. Parallel up to ``CAMO_BENCH_THREADS``."""
    workers = _thread_count()
    if workers > 1 and len(seqs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: sequence_errors(tr, s), seqs))
    else:
        results = [sequence_errors(tr, s) for s in seqs]
    return {s.name: r for s, r in zip(seqs, results)}


def _require_frames(errors: FrameErrors):
    if len(errors) == 0:
        raise EmptyEvaluationError("empty evaluation pool: no frame with present ground truth")


def precision_from_errors(center: np.ndarray, thresholds=PRECISION_THRESHOLDS) -> MetricCurve:
    thresholds = np.asarray(thresholds, dtype=np.float64)
    values = (center[None, :] <= thresholds[:, None]).mean(axis=1)
    return MetricCurve(thresholds, values)


def success_from_overlaps(overlap: np.ndarray, thresholds=SUCCESS_THRESHOLDS) -> MetricCurve:
    thresholds = np.asarray(thresholds, dtype=np.float64)
    values = (overlap[None, :] > thresholds[:, None]).mean(axis=1)
    return MetricCurve(thresholds, values)


def precision_curve(tr: TrackerResult, seqs: Seq[Sequence], thresholds=PRECISION_THRESHOLDS) -> MetricCurve:
    """Fraction of evaluated frames with center error <= each pixel threshold."""
    errors = FrameErrors.concat(collect_errors(tr, seqs).values())
    _require_frames(errors)
    return precision_from_errors(errors.center, thresholds)


def normalized_precision_curve(
    tr: TrackerResult, seqs: Seq[Sequence], thresholds=NORM_PRECISION_THRESHOLDS
) -> MetricCurve:
    errors = FrameErrors.concat(collect_errors(tr, seqs).values())
    _require_frames(errors)
    return precision_from_errors(errors.normalized, thresholds)


def success_curve(tr: TrackerResult, seqs: Seq[Sequence], thresholds=SUCCESS_THRESHOLDS) -> MetricCurve:
    """Fraction of evaluated frames with IoU strictly above each threshold."""
    errors = FrameErrors.concat(collect_errors(tr, seqs).values())
    _require_frames(errors)
    return success_from_overlaps(errors.overlap, thresholds)


def auc(curve: MetricCurve) -> float:
    """Mean of the sampled success values."""
    return curve.mean()


def nprc(curve: MetricCurve) -> float:
    """Normalized-precision score: mean of the sampled curve over [0, 0.5]."""
    return curve.mean()


@dataclass(frozen=True)
class ScopeMetrics:
    """Scores and curves for one scope (whole dataset, attribute subset, or sequence)."""

    prc: float
    nprc: float
    auc: float
    precision: MetricCurve
    normalized_precision: MetricCurve
    success: MetricCurve
    frames: int
    sequences: int

    def to_dict(self) -> dict:
        return {
            "prc": self.prc,
            "nprc": self.nprc,
            "auc": self.auc,
            "curves": {
                "precision": self.precision.to_dict(),
                "normalized_precision": self.normalized_precision.to_dict(),
                "success": self.success.to_dict(),
            },
        }


def _scope_from_errors(errors: FrameErrors, n_sequences: int) -> ScopeMetrics:
    _require_frames(errors)
    p = precision_from_errors(errors.center)
    n = precision_from_errors(errors.normalized, NORM_PRECISION_THRESHOLDS)
    s = success_from_overlaps(errors.overlap)
    return ScopeMetrics(p.at(PRC_THRESHOLD), nprc(n), auc(s), p, n, s, len(errors), n_sequences)


def _average_curves(curves: list[MetricCurve]) -> MetricCurve:
    values = np.mean([c.values for c in curves], axis=0)
    return MetricCurve(curves[0].thresholds, np.clip(values, 0.0, 1.0))


def scope_metrics(
    per_sequence: Mapping[str, FrameErrors], names: Seq[str], aggregation: str = "pooled"
) -> ScopeMetrics:
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {aggregation!r}")
    # sorted so the result does not depend on sequence order
    names = sorted(names)
    pooled = FrameErrors.concat(per_sequence[n] for n in names)
    if aggregation == "pooled":
        return _scope_from_errors(pooled, len(names))
    _require_frames(pooled)
    parts = [_scope_from_errors(per_sequence[n], 1) for n in names if len(per_sequence[n])]
    p = _average_curves([m.precision for m in parts])
    n = _average_curves([m.normalized_precision for m in parts])
    s = _average_curves([m.success for m in parts])
    return ScopeMetrics(p.at(PRC_THRESHOLD), nprc(n), auc(s), p, n, s, len(pooled), len(names))


@dataclass(frozen=True)
class EvaluationReport:
    tracker: str
    aggregation: str
    overall: ScopeMetrics
    per_attribute: Mapping[str, ScopeMetrics] = field(default_factory=dict)
    per_sequence: Mapping[str, ScopeMetrics] = field(default_factory=dict)

    def score(self, key: str) -> float:
        if key not in RANK_KEYS:
            raise ValueError(f"rank key must be one of {RANK_KEYS}, got {key!r}")
        return getattr(self.overall, key)

    @property
    def frame_counts(self) -> dict:
        return {
            "overall": self.overall.frames,
            "per_attribute": {a: m.frames for a, m in self.per_attribute.items()},
            "per_sequence": {s: m.frames for s, m in self.per_sequence.items()},
        }

    def to_dict(self) -> dict:
        return {
            "tracker": self.tracker,
            "aggregation": self.aggregation,
            "overall": self.overall.to_dict(),
            "per_attribute": {a: m.to_dict() for a, m in self.per_attribute.items()},
            "per_sequence": {s: m.to_dict() for s, m in self.per_sequence.items()},
            "frame_counts": self.frame_counts,
        }


def attribute_evaluation(
    tr: TrackerResult, ds: Dataset, attr: str, aggregation: str = "pooled"
) -> ScopeMetrics:
    subset = ds.with_attribute(attr)
    if not subset:
        raise EmptyEvaluationError(f"no sequence in {ds.name!r} carries attribute {attr}")
    errors = collect_errors(tr, subset)
    return scope_metrics(errors, list(errors), aggregation)


def evaluate(
    tr: TrackerResult,
    ds: Dataset,
    *,
    per_attribute: bool = True,
    aggregation: str = "pooled",
) -> EvaluationReport:
    """Full OPE report for one tracker.

    Attributes with no sequences, and sequences with no present frame, are
    left out of the per-attribute and per-sequence sections.
    """
    errors = collect_errors(tr, ds.sequences)
    overall = scope_metrics(errors, list(errors), aggregation)
    attrs = {}
    if per_attribute:
        for attr in ATTRIBUTES:
            idx = attribute_index(attr)
            names = [s.name for s in ds.sequences if s.attributes.flags[idx]]
            if names and sum(len(errors[n]) for n in names):
                attrs[attr] = scope_metrics(errors, names, aggregation)
    per_seq = {
        name: _scope_from_errors(errors[name], 1)
        for name in sorted(errors)
        if len(errors[name])
    }
    return EvaluationReport(tr.tracker_name, aggregation, overall, attrs, per_seq)


def rank_trackers(reports: Iterable[EvaluationReport], key: str = "auc") -> list[EvaluationReport]:
    """Best first; equal scores fall back to tracker name order."""
    reports = list(reports)
    return sorted(reports, key=lambda r: (-r.score(key), r.tracker))
