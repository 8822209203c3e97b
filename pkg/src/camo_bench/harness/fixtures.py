"""Bundled fixtures and the generators that produced them."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from camo_bench.dataset import (
    ATTRIBUTES,
    COOCCURRENCE_ATTRIBUTES,
    COTD_CATEGORIES,
    AttributeSet,
    BoundingBox,
    Dataset,
    FrameAnnotation,
    Sequence,
    co_occurrence,
    derive_frame_attributes,
    load_dataset,
    write_dataset,
)
from camo_bench.errors import FixtureError
from camo_bench.harness.report import load_tracker_results, write_tracker_results
from camo_bench.harness.trackers import SyntheticTracker, run_tracker

# Reference pairwise sequence counts over COOCCURRENCE_ATTRIBUTES
# (IV, SV, DEF, MB, FM, OV, LR, POC, ROT, FOC, ARC); diagonal = per-attribute totals.
COTD_COOCCURRENCE = (
    (5, 0, 1, 1, 0, 0, 0, 2, 0, 0, 0),
    (0, 29, 14, 12, 7, 8, 3, 17, 2, 1, 4),
    (1, 14, 59, 32, 9, 16, 5, 27, 13, 3, 8),
    (1, 12, 32, 72, 12, 19, 10, 25, 8, 4, 6),
    (0, 7, 9, 12, 14, 5, 2, 8, 3, 2, 1),
    (0, 8, 16, 19, 5, 39, 3, 12, 4, 2, 2),
    (0, 3, 5, 10, 2, 3, 21, 6, 0, 0, 0),
    (2, 17, 27, 25, 8, 12, 6, 58, 11, 4, 6),
    (0, 2, 13, 8, 3, 4, 0, 11, 29, 1, 3),
    (0, 1, 3, 4, 2, 2, 0, 4, 1, 4, 0),
    (0, 4, 8, 6, 1, 2, 0, 6, 3, 0, 9),
)
COTD_SEQUENCE_COUNT = 200

DEMO_TRACKERS = (
    SyntheticTracker.oracle(),
    SyntheticTracker.constant_offset(25, 0),
    SyntheticTracker.constant_offset(10, 0),
    SyntheticTracker.scaled(0.5),
    SyntheticTracker.noisy(4.0, seed=7),
    SyntheticTracker.lost_after(12),
)
DEMO_SEED = 2024


@dataclass(frozen=True)
class Fixture:
    name: str
    dataset: Dataset
    # metric name -> (value, provenance)
    expected: dict = field(default_factory=dict)


def fixtures_root() -> Path:
    return Path(str(resources.files("camo_bench") / "fixtures"))


# -- COTD attribute fixture --------------------------------------------------

def cotd_stub_dataset(flag_rows) -> Dataset:
    """200 flag-only sequences, ``bird-1 .. spider-10``, one placeholder frame each.

    ``flag_rows`` holds the 11 non-BC flags per sequence; BC is always set.
    """
    flag_rows = [tuple(bool(f) for f in row) for row in flag_rows]
    if len(flag_rows) != COTD_SEQUENCE_COUNT:
        raise FixtureError(f"expected {COTD_SEQUENCE_COUNT} flag rows, got {len(flag_rows)}")
    seqs = []
    per_cat = COTD_SEQUENCE_COUNT // len(COTD_CATEGORIES)
    for i, row in enumerate(flag_rows):
        cat = COTD_CATEGORIES[i // per_cat]
        seqs.append(Sequence(
            name=f"{cat}-{i % per_cat + 1}",
            category=cat,
            frames=(FrameAnnotation(BoundingBox(0.0, 0.0, 64.0, 64.0), False),),
            attributes=AttributeSet(row + (True,)),
            frame_width=1280.0,
            frame_height=720.0,
            has_geometry=False,
        ))
    return Dataset("cotd_attributes", tuple(seqs))


def verify_cotd_table(ds: Dataset):
    got = co_occurrence(ds).counts
    want = np.array(COTD_COOCCURRENCE)
    if got.shape != want.shape or not np.array_equal(got, want):
        diff = np.argwhere(got != want)
        i, j = diff[0]
        a, b = COOCCURRENCE_ATTRIBUTES[i], COOCCURRENCE_ATTRIBUTES[j]
        raise FixtureError(
            f"attribute fixture disagrees with the reference table at {len(diff)} entries, "
            f"first [{a}][{b}]: {got[i, j]} != {want[i, j]}"
        )
    if len(ds) != COTD_SEQUENCE_COUNT:
        raise FixtureError(f"attribute fixture has {len(ds)} sequences, expected {COTD_SEQUENCE_COUNT}")
    if not all(s.attributes["BC"] for s in ds):
        raise FixtureError("every sequence must carry BC")


def build_cotd_attribute_fixture(root=None) -> Dataset:
    """Load the stored flag assignment and check it reproduces the reference table."""
    ds = load_dataset(Path(root) if root else fixtures_root() / "cotd_attributes", "cotd_attributes")
    verify_cotd_table(ds)
    return ds


# -- synthetic box fixtures --------------------------------------------------

def synthetic_sequence(name: str, n_frames: int, rng: np.random.Generator, *,
                       absent_rate: float = 0.1, width: int = 640, height: int = 480) -> Sequence:
    """Random-walk box track with integer corners and sizes divisible by 4.

    Dyadic coordinates keep scaled and offset trackers' IoU and center
    errors exact in float64. Frame 0 is always present.
    """
    w = int(rng.integers(4, 31)) * 4
    h = int(rng.integers(4, 31)) * 4
    x = int(rng.integers(0, width - w))
    y = int(rng.integers(0, height - h))
    frames = []
    for t in range(n_frames):
        if t and rng.random() < absent_rate:
            frames.append(FrameAnnotation.missing())
            continue
        x = int(np.clip(x + rng.integers(-12, 13), 0, width - w))
        y = int(np.clip(y + rng.integers(-12, 13), 0, height - h))
        frames.append(FrameAnnotation.present(x, y, w, h))
    flags = dict(zip(ATTRIBUTES, [bool(rng.random() < 0.4) for _ in ATTRIBUTES]))
    flags["BC"] = True
    category = COTD_CATEGORIES[int(rng.integers(len(COTD_CATEGORIES)))]
    seq = Sequence(name, category, tuple(frames), AttributeSet(), float(width), float(height))
    # geometric attributes follow the boxes so an audit of the fixture agrees
    flags.update(derive_frame_attributes(seq).sequence_flags())
    return dataclasses.replace(seq, attributes=AttributeSet(tuple(flags[a] for a in ATTRIBUTES)))


def synthetic_dataset(n_sequences: int = 10, n_frames: int = 40, seed: int = DEMO_SEED, *,
                      absent_rate: float = 0.1, name: str = "synthetic") -> Dataset:
    rng = np.random.default_rng(seed)
    seqs = [synthetic_sequence(f"seq-{i + 1:03d}", n_frames, rng, absent_rate=absent_rate)
            for i in range(n_sequences)]
    return Dataset(name, tuple(seqs))


def demo_fixture() -> Fixture:
    ds = synthetic_dataset(name="demo")
    expected = {
        "oracle.prc": (1.0, "TRIVIAL: zero center error"),
        "oracle.nprc": (1.0, "TRIVIAL: zero center error"),
        "oracle.auc": (20 / 21, "TRIVIAL: IoU 1 exceeds every sampled threshold but 1"),
        "offset_25_0.precision_step": (25.0, "DERIVED: constant 25 px center offset"),
        "scaled_0.5.success_step": (0.25, "DERIVED: half-size concentric box, IoU = 1/4"),
    }
    return Fixture("demo", ds, expected)


def write_demo_fixture(out_dir, trackers=DEMO_TRACKERS) -> tuple[Path, Path]:
    """Write ``<out>/dataset`` and ``<out>/results/<tracker>/``."""
    out_dir = Path(out_dir)
    fx = demo_fixture()
    ds_root = write_dataset(fx.dataset, out_dir / "dataset")
    results_root = out_dir / "results"
    for t in trackers:
        write_tracker_results(run_tracker(t, fx.dataset), results_root)
    return ds_root, results_root


def load_demo_fixture(root=None):
    root = Path(root) if root else fixtures_root() / "demo"
    ds = load_dataset(root / "dataset", "demo")
    results = {t.name: load_tracker_results(root / "results", t.name, ds) for t in DEMO_TRACKERS}
    return ds, results


def write_cotd_fixture(flag_rows, out_dir) -> Path:
    ds = cotd_stub_dataset(flag_rows)
    verify_cotd_table(ds)
    return write_dataset(ds, out_dir)
