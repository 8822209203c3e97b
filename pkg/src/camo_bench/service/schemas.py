"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator

from camo_bench.dataset import ATTRIBUTES


class FrameIn(BaseModel):
    box: Optional[tuple[float, float, float, float]] = Field(None, description="x, y, w, h in pixels")
    absent: bool = False


class SequenceIn(BaseModel):
    name: str
    category: str = "unknown"
    width: float
    height: float
    frames: list[FrameIn] = Field(..., min_length=1)
    attributes: list[str] = Field(default_factory=lambda: ["BC"], description="names of the set flags")

    @field_validator("attributes")
    @classmethod
    def _known(cls, v):
        unknown = sorted(set(v) - set(ATTRIBUTES))
        if unknown:
            raise ValueError(f"unknown attributes {unknown}")
        return v


class SequenceFiles(BaseModel):
    """Raw text of one sequence directory's files."""

    name: str
    groundtruth: str
    absence: Optional[str] = None
    attributes: str
    meta: str


class DatasetIn(BaseModel):
    name: str = "dataset"
    sequences: list[SequenceIn]


class TrackerResultIn(BaseModel):
    tracker: str
    predictions: dict[str, list[tuple[float, float, float, float]]]


class EvaluateRequest(BaseModel):
    dataset: DatasetIn
    results: list[TrackerResultIn] = Field(..., min_length=1)
    per_attribute: bool = False
    aggregation: Literal["pooled", "averaged"] = "pooled"
    rank_by: Literal["prc", "auc", "nprc"] = "auc"


class CurveOut(BaseModel):
    thresholds: list[float]
    values: list[float]


class CurvesOut(BaseModel):
    precision: CurveOut
    normalized_precision: CurveOut
    success: CurveOut


class ScopeOut(BaseModel):
    prc: float
    nprc: float
    auc: float
    curves: CurvesOut


class FrameCountsOut(BaseModel):
    overall: int
    per_attribute: dict[str, int]
    per_sequence: dict[str, int]


class ReportOut(BaseModel):
    tracker: str
    aggregation: str
    overall: ScopeOut
    per_attribute: dict[str, ScopeOut]
    per_sequence: dict[str, ScopeOut]
    frame_counts: FrameCountsOut


class RankingRow(BaseModel):
    rank: int
    tracker: str
    prc: float
    nprc: float
    auc: float
    frames: int


class EvaluateResponse(BaseModel):
    reports: list[ReportOut]
    ranking: list[RankingRow]


class ViolationOut(BaseModel):
    rule: str
    frame: Optional[int]
    message: str


class ValidateResponse(BaseModel):
    sequence: str
    violations: list[ViolationOut]
    not_evaluated: list[str]


class AttributeAuditResponse(BaseModel):
    sequence: str
    declared: dict[str, bool]
    derived: Optional[dict[str, bool]]
    per_frame: Optional[dict[str, list[bool]]]


class CoOccurrenceRequest(BaseModel):
    sequences: list[list[str]] = Field(..., description="attribute names set on each sequence")


class CoOccurrenceResponse(BaseModel):
    attributes: list[str]
    counts: list[list[int]]


class EncoderCheckRequest(BaseModel):
    """Overrides on top of the default encoder configuration."""

    n_blocks: Optional[int] = None
    embed_dim: Optional[int] = None
    n_heads: Optional[int] = None
    n_template_tokens: Optional[int] = None
    n_search_tokens: Optional[int] = None
    patch_dim: Optional[int] = None
    mlp_ratio: Optional[int] = None
    keep_ratio: Optional[float] = None
    prune_at: Optional[list[int]] = None
    gamma: Optional[float] = None
    mlp_dims: Optional[list[int]] = None
    seed: Optional[int] = None
    gradients: bool = True


class CheckOut(BaseModel):
    name: str
    passed: bool
    detail: str


class GammaChecksum(BaseModel):
    gamma: float
    sha256: str


class EncoderCheckResponse(BaseModel):
    passed: bool
    checks: list[CheckOut]
    gamma_sweep: list[GammaChecksum]
