"""HTTP front end over the library.

Run with ``camo-bench-serve`` or ``uvicorn camo_bench.service.app:app``.
"""

from __future__ import annotations

import dataclasses

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from camo_bench import __version__
from camo_bench.dataset import (
    ATTRIBUTES,
    COOCCURRENCE_ATTRIBUTES,
    RULES_NOT_EVALUATED,
    AttributeSet,
    BoundingBox,
    Dataset,
    FrameAnnotation,
    Sequence,
    co_occurrence,
    derive_frame_attributes,
    parse_meta,
    parse_sequence,
    validate_rules,
)
from camo_bench.encoder.checks import run_encoder_checks
from camo_bench.encoder.config import EncoderConfig
from camo_bench.errors import CamoBenchError, MissingDataError
from camo_bench.harness.fixtures import build_cotd_attribute_fixture
from camo_bench.harness.report import ranking_rows
from camo_bench.metrics import TrackerResult, evaluate
from camo_bench.service import schemas

app = FastAPI(title="camo-bench", version=__version__)


@app.exception_handler(CamoBenchError)
async def _library_error(request: Request, exc: CamoBenchError):
    status = 404 if isinstance(exc, MissingDataError) else 422
    return JSONResponse(status_code=status, content={"detail": str(exc), "type": type(exc).__name__})


@app.exception_handler(ValueError)
async def _value_error(request: Request, exc: ValueError):
    return JSONResponse(status_code=422, content={"detail": str(exc), "type": type(exc).__name__})


def to_sequence(s: schemas.SequenceIn) -> Sequence:
    frames = []
    for i, f in enumerate(s.frames):
        if f.box is None:
            if not f.absent:
                raise ValueError(f"sequence {s.name!r} frame {i}: present frame without a box")
            frames.append(FrameAnnotation(None, True))
        else:
            frames.append(FrameAnnotation(BoundingBox(*map(float, f.box)), f.absent))
    return Sequence(s.name, s.category, tuple(frames), AttributeSet.from_names(s.attributes), s.width, s.height)


def from_sequence(seq: Sequence) -> schemas.SequenceIn:
    return schemas.SequenceIn(
        name=seq.name,
        category=seq.category,
        width=seq.frame_width,
        height=seq.frame_height,
        frames=[schemas.FrameIn(box=f.box.as_tuple() if f.box else None, absent=f.absent) for f in seq.frames],
        attributes=seq.attributes.names(),
    )


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/sequences/parse", response_model=schemas.SequenceIn)
def parse_files(body: schemas.SequenceFiles):
    meta = parse_meta(body.meta)
    meta["name"] = body.name
    return from_sequence(parse_sequence(body.groundtruth, body.absence, body.attributes, meta))


@app.post("/sequences/validate", response_model=schemas.ValidateResponse)
def validate(body: schemas.SequenceIn):
    seq = to_sequence(body)
    return schemas.ValidateResponse(
        sequence=seq.name,
        violations=[schemas.ViolationOut(rule=v.rule, frame=v.frame, message=v.message) for v in validate_rules(seq)],
        not_evaluated=list(RULES_NOT_EVALUATED),
    )


@app.post("/sequences/attributes", response_model=schemas.AttributeAuditResponse)
def audit_attributes(body: schemas.SequenceIn):
    seq = to_sequence(body)
    declared = {a: seq.attributes[a] for a in ("FM", "LR", "ARC")}
    fa = derive_frame_attributes(seq)
    return schemas.AttributeAuditResponse(
        sequence=seq.name,
        declared=declared,
        derived=fa.sequence_flags(),
        per_frame={"FM": list(fa.fm), "LR": list(fa.lr), "ARC": list(fa.arc)},
    )


@app.post("/cooccurrence", response_model=schemas.CoOccurrenceResponse)
def cooccurrence(body: schemas.CoOccurrenceRequest):
    sets = [AttributeSet.from_names(names) for names in body.sequences]
    seqs = [
        Sequence(f"s{i}", "unknown", (FrameAnnotation(BoundingBox(0, 0, 1, 1)),), a, 1.0, 1.0, False)
        for i, a in enumerate(sets)
    ]
    m = co_occurrence(seqs)
    return schemas.CoOccurrenceResponse(attributes=list(COOCCURRENCE_ATTRIBUTES), counts=m.to_rows())


@app.get("/fixtures/cotd/cooccurrence", response_model=schemas.CoOccurrenceResponse)
def cotd_cooccurrence():
    m = co_occurrence(build_cotd_attribute_fixture())
    return schemas.CoOccurrenceResponse(attributes=list(COOCCURRENCE_ATTRIBUTES), counts=m.to_rows())


@app.post("/evaluate", response_model=schemas.EvaluateResponse)
def evaluate_trackers(body: schemas.EvaluateRequest):
    ds = Dataset(body.dataset.name, tuple(to_sequence(s) for s in body.dataset.sequences))
    reports = []
    for r in body.results:
        missing = [s.name for s in ds if s.name not in r.predictions]
        if missing:
            raise MissingDataError(f"tracker {r.tracker!r}: missing result for sequence {missing[0]!r}")
        result = TrackerResult(r.tracker, {name: r.predictions[name] for name in (s.name for s in ds)})
        reports.append(evaluate(result, ds, per_attribute=body.per_attribute, aggregation=body.aggregation))
    return {
        "reports": [rep.to_dict() for rep in reports],
        "ranking": ranking_rows(reports, body.rank_by),
    }


@app.post("/encoder/check", response_model=schemas.EncoderCheckResponse)
def encoder_check(body: schemas.EncoderCheckRequest):
    overrides = {k: v for k, v in body.model_dump(exclude={"gradients"}).items() if v is not None}
    fields = {f.name for f in dataclasses.fields(EncoderConfig)}
    config = EncoderConfig(**{k: v for k, v in overrides.items() if k in fields})
    results, payload = run_encoder_checks(config, gradients=body.gradients)
    return {
        "passed": all(r.passed for r in results),
        "checks": payload["checks"],
        "gamma_sweep": payload["gamma_sweep"],
    }


@app.get("/attributes")
def attributes():
    return {"attributes": list(ATTRIBUTES), "cooccurrence_attributes": list(COOCCURRENCE_ATTRIBUTES)}


def serve(argv=None):
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(prog="camo-bench-serve")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)
    uvicorn.run(app, host=args.host, port=args.port)
