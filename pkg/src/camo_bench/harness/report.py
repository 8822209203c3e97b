"""Report files and tracker result directories.

All writers produce byte-identical output for identical input: fixed key
order, ``repr`` floats (lossless), ``\\n`` line endings.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Iterable

import numpy as np

from camo_bench.dataset import Dataset, format_box, parse_box_lines
from camo_bench.errors import CamoBenchError, FormatError, MissingDataError
from camo_bench.metrics import EvaluationReport, MetricCurve, ScopeMetrics, TrackerResult, rank_trackers

CURVE_NAMES = ("precision", "normalized_precision", "success")


class ReportWriteError(CamoBenchError, OSError):
    pass


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def curve_csv(curve: MetricCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "value"])
    for t, v in zip(curve.thresholds, curve.values):
        writer.writerow([repr(t), repr(v)])
    return buf.getvalue()


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportWriteError(f"cannot write {str(path)!r}: {exc.strerror}") from None


def _scopes(report: EvaluationReport) -> Iterable[tuple[str, ScopeMetrics]]:
    yield "overall", report.overall
    for attr, m in report.per_attribute.items():
        yield f"attr_{attr}", m
    for seq, m in report.per_sequence.items():
        yield f"seq_{seq}", m


def emit_report(report: EvaluationReport, out_dir, formats=("json", "csv")) -> list[Path]:
    """Write ``<tracker>.json`` and ``<tracker>/<scope>_<curve>.csv`` files."""
    out_dir = Path(out_dir)
    bad = set(formats) - {"json", "csv"}
    if bad:
        raise ValueError(f"unknown report formats {sorted(bad)}")
    written = []
    if "json" in formats:
        path = out_dir / f"{report.tracker}.json"
        _write(path, dumps_json(report.to_dict()))
        written.append(path)
    if "csv" in formats:
        for scope, metrics in _scopes(report):
            curves = {
                "precision": metrics.precision,
                "normalized_precision": metrics.normalized_precision,
                "success": metrics.success,
            }
            for name in CURVE_NAMES:
                path = out_dir / report.tracker / f"{scope}_{name}.csv"
                _write(path, curve_csv(curves[name]))
                written.append(path)
    return written


def load_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def ranking_rows(reports: Iterable[EvaluationReport], key: str = "auc") -> list[dict]:
    return [
        {"rank": i, "tracker": r.tracker, "prc": r.overall.prc, "nprc": r.overall.nprc,
         "auc": r.overall.auc, "frames": r.overall.frames}
        for i, r in enumerate(rank_trackers(reports, key), start=1)
    ]


def emit_ranking(reports: Iterable[EvaluationReport], out_dir, key: str = "auc") -> list[Path]:
    out_dir = Path(out_dir)
    rows = ranking_rows(reports, key)
    json_path = out_dir / "ranking.json"
    _write(json_path, dumps_json({"key": key, "ranking": rows}))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["rank", "tracker", "prc", "nprc", "auc", "frames"],
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    csv_path = out_dir / "ranking.csv"
    _write(csv_path, buf.getvalue())
    return [json_path, csv_path]


def format_ranking_table(reports: Iterable[EvaluationReport], key: str = "auc") -> str:
    rows = ranking_rows(reports, key)
    width = max([len("tracker")] + [len(r["tracker"]) for r in rows])
    lines = [f"{'rank':>4}  {'tracker':<{width}}  {'PRC':>6}  {'nPRC':>6}  {'AUC':>6}"]
    for r in rows:
        lines.append(f"{r['rank']:>4}  {r['tracker']:<{width}}  {r['prc']:6.3f}  {r['nprc']:6.3f}  {r['auc']:6.3f}")
    return "\n".join(lines) + "\n"


# -- tracker result directories ---------------------------------------------

def write_tracker_results(result: TrackerResult, results_root) -> Path:
    tracker_dir = Path(results_root) / result.tracker_name
    for seq_name in sorted(result.predictions):
        boxes = result.predictions[seq_name]
        _write(tracker_dir / f"{seq_name}.txt", "".join(format_box(tuple(b)) + "\n" for b in boxes))
    return tracker_dir


def load_tracker_results(results_root, tracker: str, ds: Dataset) -> TrackerResult:
    """Read ``<results_root>/<tracker>/<seq>.txt`` for every sequence of ``ds``."""
    tracker_dir = Path(results_root) / tracker
    if not tracker_dir.is_dir():
        raise MissingDataError(f"no result directory for tracker {tracker!r} under {os.fspath(results_root)!r}")
    preds = {}
    for seq in ds.sequences:
        path = tracker_dir / f"{seq.name}.txt"
        if not path.is_file():
            raise MissingDataError(f"tracker {tracker!r}: missing result for sequence {seq.name!r} ({path})")
        rows = parse_box_lines(path.read_text(), path)
        if len(rows) != len(seq.frames):
            raise FormatError(f"{len(rows)} predictions for {len(seq.frames)} frames", path)
        arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
        bad = np.flatnonzero(np.any(arr[:, 2:] <= 0, axis=1))
        if len(bad):
            raise FormatError("prediction with w or h <= 0", path, int(bad[0]) + 1)
        preds[seq.name] = arr
    return TrackerResult(tracker, preds)


def discover_trackers(results_root) -> list[str]:
    root = Path(results_root)
    if not root.is_dir():
        raise MissingDataError(f"results root {os.fspath(root)!r} does not exist")
    return sorted(p.name for p in root.iterdir() if p.is_dir())
