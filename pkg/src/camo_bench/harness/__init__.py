"""Synthetic trackers, bundled fixtures and report writers."""

from camo_bench.harness.fixtures import (
    COTD_COOCCURRENCE,
    Fixture,
    build_cotd_attribute_fixture,
    demo_fixture,
    synthetic_dataset,
)
from camo_bench.harness.report import emit_ranking, emit_report, load_tracker_results, write_tracker_results
from camo_bench.harness.trackers import SyntheticTracker, run_tracker

__all__ = [
    "COTD_COOCCURRENCE",
    "Fixture",
    "SyntheticTracker",
    "build_cotd_attribute_fixture",
    "demo_fixture",
    "emit_ranking",
    "emit_report",
    "load_tracker_results",
    "run_tracker",
    "synthetic_dataset",
    "write_tracker_results",
]
