"""Benchmark data model: boxes, sequences, attribute flags and their file formats.

On-disk layout of one sequence directory::

    <name>/groundtruth.txt   x,y,w,h per frame
    <name>/absence.label     0/1 per frame (1 = target absent)
    <name>/attributes.txt    12 comma-separated 0/1 flags
    <name>/meta.ini          width=, height=, category=

A dataset root holds sequence directories and a ``list.txt`` naming them.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from camo_bench.errors import AnnotationError, FormatError, MissingDataError

ATTRIBUTES = ("IV", "SV", "DEF", "MB", "FM", "OV", "LR", "POC", "ROT", "FOC", "ARC", "BC")
# BC is carried by every sequence, so the co-occurrence table leaves it out.
COOCCURRENCE_ATTRIBUTES = ATTRIBUTES[:-1]

COTD_CATEGORIES = (
    "bird", "bug", "butterfly", "cat", "crab", "dog", "fish", "frog", "grasshopper",
    "leopard", "lizard", "mantis", "octopus", "person", "phasmatodea", "seahorse",
    "rabbit", "shrimp", "snake", "spider",
)

LR_MAX_AREA = 900.0
ARC_RANGE = (0.5, 2.0)
FM_RATIO = 0.2

GROUNDTRUTH_FILE = "groundtruth.txt"
ABSENCE_FILE = "absence.label"
ATTRIBUTE_FILE = "attributes.txt"
META_FILE = "meta.ini"
LIST_FILE = "list.txt"


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box, top-left origin, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"box field {name} is not finite: {value!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w!r} h={self.h!r}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True, slots=True)
class FrameAnnotation:
    """One frame of ground truth.

    ``absent`` frames normally have ``box=None``. A box left on an absent
    frame is kept so that :func:`validate_rules` can report it.
    """

    box: BoundingBox | None
    absent: bool = False

    @classmethod
    def present(cls, x, y, w, h) -> "FrameAnnotation":
        return cls(BoundingBox(float(x), float(y), float(w), float(h)), False)

    @classmethod
    def missing(cls) -> "FrameAnnotation":
        return cls(None, True)


@dataclass(frozen=True)
class AttributeSet:
    flags: tuple[bool, ...] = (False,) * len(ATTRIBUTES)

    def __post_init__(self):
        if len(self.flags) != len(ATTRIBUTES):
            raise FormatError(f"expected {len(ATTRIBUTES)} attribute flags, got {len(self.flags)}")
        object.__setattr__(self, "flags", tuple(bool(f) for f in self.flags))

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "AttributeSet":
        wanted = set(names)
        unknown = wanted - set(ATTRIBUTES)
        if unknown:
            raise KeyError(f"unknown attributes: {sorted(unknown)}")
        return cls(tuple(a in wanted for a in ATTRIBUTES))

    def __getitem__(self, attr: str) -> bool:
        return self.flags[attribute_index(attr)]

    def names(self) -> list[str]:
        return [a for a, f in zip(ATTRIBUTES, self.flags) if f]


def attribute_index(attr: str) -> int:
    try:
        return ATTRIBUTES.index(attr)
    except ValueError:
        raise KeyError(f"unknown attribute {attr!r}; expected one of {', '.join(ATTRIBUTES)}") from None


@dataclass(frozen=True)
class Sequence:
    name: str
    category: str
    frames: tuple[FrameAnnotation, ...]
    attributes: AttributeSet
    frame_width: float
    frame_height: float
    # False for stub sequences whose single box is a placeholder, not a measurement.
    has_geometry: bool = True

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise FormatError(f"sequence {self.name!r} has no frames")

    def __len__(self):
        return len(self.frames)

    def present_mask(self) -> np.ndarray:
        return np.array([not f.absent for f in self.frames], dtype=bool)

    def gt_array(self) -> np.ndarray:
        """(n_frames, 4) array; rows of absent frames are NaN."""
        out = np.full((len(self.frames), 4), np.nan)
        for i, f in enumerate(self.frames):
            if not f.absent and f.box is not None:
                out[i] = f.box.as_tuple()
        return out


@dataclass(frozen=True)
class Dataset:
    name: str
    sequences: tuple[Sequence, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))
        seen = set()
        for s in self.sequences:
            if s.name in seen:
                raise FormatError(f"duplicate sequence name {s.name!r} in dataset {self.name!r}")
            seen.add(s.name)

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def __getitem__(self, name: str) -> Sequence:
        for s in self.sequences:
            if s.name == name:
                return s
        raise KeyError(name)

    def with_attribute(self, attr: str) -> list[Sequence]:
        idx = attribute_index(attr)
        return [s for s in self.sequences if s.attributes.flags[idx]]


# --------------------------------------------------------------------------
# parsing and serialization
# --------------------------------------------------------------------------

def _parse_float(token: str, path, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"non-numeric field {token!r}", path, lineno) from None
    if not math.isfinite(value):
        raise FormatError(f"non-finite field {token!r}", path, lineno)
    return value


def parse_box_lines(text: str, path=None) -> list[tuple[float, float, float, float]]:
    """Parse ``x,y,w,h`` lines. Raw tuples, no validity checks on size."""
    rows = []
    lines = text.splitlines()
    # a single trailing blank line is tolerated, interior blanks are not
    while lines and not lines[-1].strip():
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        fields = line.strip().split(",")
        if len(fields) != 4:
            raise FormatError(f"expected 4 comma-separated fields, got {len(fields)}", path, lineno)
        rows.append(tuple(_parse_float(f.strip(), path, lineno) for f in fields))
    return rows


def _parse_absence(text: str, n_frames: int, path=None) -> list[bool]:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) != n_frames:
        raise FormatError(f"absence file has {len(lines)} lines, groundtruth has {n_frames}", path)
    out = []
    for lineno, line in enumerate(lines, start=1):
        token = line.strip()
        if token not in ("0", "1"):
            raise FormatError(f"absence flag must be 0 or 1, got {token!r}", path, lineno)
        out.append(token == "1")
    return out


def parse_attributes(text: str, path=None) -> AttributeSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 1:
        raise FormatError(f"attribute file must hold exactly one line, found {len(lines)}", path)
    tokens = [t.strip() for t in lines[0].split(",")]
    if len(tokens) != len(ATTRIBUTES):
        raise FormatError(f"expected {len(ATTRIBUTES)} attribute flags, got {len(tokens)}", path, 1)
    for t in tokens:
        if t not in ("0", "1"):
            raise FormatError(f"attribute flag must be 0 or 1, got {t!r}", path, 1)
    return AttributeSet(tuple(t == "1" for t in tokens))


def parse_meta(text: str, path=None) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string("[meta]\n" + text)
    except configparser.Error as exc:
        raise FormatError(f"bad meta file: {exc}", path) from None
    return dict(parser["meta"])


def parse_sequence(
    annotation_text: str,
    absence_text: str | None,
    attribute_text: str,
    meta: Mapping[str, object],
    *,
    paths: Mapping[str, object] | None = None,
) -> Sequence:
    """Build a :class:`Sequence` from the text of its annotation files.

    ``meta`` needs ``name``, ``width``, ``height`` and ``category``. Line
    ``i`` of the box text is frame ``i``. An absent frame written as
    ``0,0,0,0`` gets no box.
    """
    paths = paths or {}
    gt_path = paths.get("groundtruth")
    rows = parse_box_lines(annotation_text, gt_path)
    if not rows:
        raise FormatError("groundtruth is empty", gt_path)
    if absence_text is None:
        absent = [False] * len(rows)
    else:
        absent = _parse_absence(absence_text, len(rows), paths.get("absence"))
    attributes = parse_attributes(attribute_text, paths.get("attributes"))

    frames = []
    for lineno, (row, is_absent) in enumerate(zip(rows, absent), start=1):
        if is_absent:
            box = None if all(v == 0 for v in row) else _make_box(row, gt_path, lineno)
            frames.append(FrameAnnotation(box, True))
        else:
            frames.append(FrameAnnotation(_make_box(row, gt_path, lineno), False))

    try:
        name = str(meta["name"])
        width = float(meta["width"])
        height = float(meta["height"])
    except KeyError as exc:
        raise FormatError(f"meta is missing {exc.args[0]!r}", paths.get("meta")) from None
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad frame size in meta: {exc}", paths.get("meta")) from None
    geometry = str(meta.get("geometry", "measured")).strip().lower()
    return Sequence(
        name=name,
        category=str(meta.get("category", "unknown")),
        frames=tuple(frames),
        attributes=attributes,
        frame_width=width,
        frame_height=height,
        has_geometry=geometry != "placeholder",
    )


def _make_box(row, path, lineno) -> BoundingBox:
    try:
        return BoundingBox(*row)
    except ValueError as exc:
        raise AnnotationError(str(exc), path, lineno) from None


def format_number(value: float) -> str:
    """Shortest text that parses back to exactly ``value``."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def format_box(box: BoundingBox | tuple | None) -> str:
    if box is None:
        return "0,0,0,0"
    values = box.as_tuple() if isinstance(box, BoundingBox) else box
    return ",".join(format_number(v) for v in values)


def serialize_sequence(seq: Sequence) -> dict[str, str]:
    """Inverse of :func:`parse_sequence`: file name -> file text."""
    gt = "".join(format_box(f.box) + "\n" for f in seq.frames)
    absence = "".join(("1" if f.absent else "0") + "\n" for f in seq.frames)
    attrs = ",".join("1" if f else "0" for f in seq.attributes.flags) + "\n"
    meta = (
        f"width={format_number(seq.frame_width)}\n"
        f"height={format_number(seq.frame_height)}\n"
        f"category={seq.category}\n"
    )
    if not seq.has_geometry:
        meta += "geometry=placeholder\n"
    return {GROUNDTRUTH_FILE: gt, ABSENCE_FILE: absence, ATTRIBUTE_FILE: attrs, META_FILE: meta}


def load_sequence(seq_dir: str | os.PathLike) -> Sequence:
    seq_dir = Path(seq_dir)
    gt_path = seq_dir / GROUNDTRUTH_FILE
    attr_path = seq_dir / ATTRIBUTE_FILE
    meta_path = seq_dir / META_FILE
    absence_path = seq_dir / ABSENCE_FILE
    for p in (gt_path, attr_path, meta_path):
        if not p.is_file():
            raise MissingDataError(f"sequence {seq_dir.name!r}: missing {p.name}")
    meta = parse_meta(meta_path.read_text(), meta_path)
    meta.setdefault("name", seq_dir.name)
    absence = absence_path.read_text() if absence_path.is_file() else None
    return parse_sequence(
        gt_path.read_text(),
        absence,
        attr_path.read_text(),
        meta,
        paths={"groundtruth": gt_path, "absence": absence_path, "attributes": attr_path, "meta": meta_path},
    )


def sequence_names(root: str | os.PathLike) -> list[str]:
    root = Path(root)
    list_path = root / LIST_FILE
    if list_path.is_file():
        return [ln.strip() for ln in list_path.read_text().splitlines() if ln.strip()]
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def load_dataset(root: str | os.PathLike, name: str | None = None) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise MissingDataError(f"dataset root {str(root)!r} does not exist")
    seqs = []
    for seq_name in sequence_names(root):
        seq_dir = root / seq_name
        if not seq_dir.is_dir():
            raise MissingDataError(f"sequence {seq_name!r} listed in {LIST_FILE} has no directory")
        seqs.append(load_sequence(seq_dir))
    return Dataset(name or root.name, tuple(seqs))


def write_dataset(ds: Dataset, root: str | os.PathLike) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for seq in ds.sequences:
        seq_dir = root / seq.name
        seq_dir.mkdir(exist_ok=True)
        for fname, text in serialize_sequence(seq).items():
            (seq_dir / fname).write_text(text)
    (root / LIST_FILE).write_text("".join(s.name + "\n" for s in ds.sequences))
    return root


# --------------------------------------------------------------------------
# annotation rules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RuleViolation:
    rule: str
    frame: int | None
    message: str
    sequence: str = ""

    def __str__(self):
        where = f"frame {self.frame}" if self.frame is not None else "sequence"
        seq = f"{self.sequence} " if self.sequence else ""
        return f"{seq}rule {self.rule} {where}: {self.message}"


# Rule 1 (tight boxes) and rule 4 (full occlusion transitions) need pixels.
RULES_NOT_EVALUATED = ("1", "4")


def validate_rules(seq: Sequence) -> list[RuleViolation]:
    """Machine-checkable annotation rules.

    Rule 2: absent frames carry no box. Rule 3: the first frame is present.
    ``bounds``: present boxes lie inside the image (touching edges is fine).
    """
    out = []
    first = seq.frames[0]
    if first.absent or first.box is None:
        out.append(RuleViolation("3", 0, "first frame has no valid box", seq.name))
    for i, frame in enumerate(seq.frames):
        if frame.absent:
            if frame.box is not None:
                out.append(RuleViolation("2", i, "absent frame carries a box", seq.name))
            continue
        box = frame.box
        if box is None:
            out.append(RuleViolation("2", i, "present frame has no box", seq.name))
            continue
        if box.x < 0 or box.y < 0 or box.x + box.w > seq.frame_width or box.y + box.h > seq.frame_height:
            out.append(RuleViolation(
                "bounds", i,
                f"box {format_box(box)} outside image {format_number(seq.frame_width)}x"
                f"{format_number(seq.frame_height)}",
                seq.name,
            ))
    return out


# --------------------------------------------------------------------------
# attribute derivation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameAttributes:
    """Per-frame FM/LR/ARC triggers; absent frames are all False."""

    fm: tuple[bool, ...]
    lr: tuple[bool, ...]
    arc: tuple[bool, ...]

    @property
    def FM(self) -> bool:
        return any(self.fm)

    @property
    def LR(self) -> bool:
        return any(self.lr)

    @property
    def ARC(self) -> bool:
        return any(self.arc)

    def sequence_flags(self) -> dict[str, bool]:
        return {"FM": self.FM, "LR": self.LR, "ARC": self.ARC}


def is_low_resolution(box: BoundingBox) -> bool:
    return box.w * box.h < LR_MAX_AREA


def is_aspect_ratio_outlier(box: BoundingBox) -> bool:
    ratio = box.w / box.h
    return ratio < ARC_RANGE[0] or ratio > ARC_RANGE[1]


def is_fast_motion(prev: BoundingBox, cur: BoundingBox) -> bool:
    (px, py), (cx, cy) = prev.center, cur.center
    displacement = math.hypot(cx - px, cy - py)
    return displacement >= FM_RATIO * math.sqrt(prev.w * prev.h)


def derive_frame_attributes(seq: Sequence) -> FrameAttributes:
    """Recompute FM, LR and ARC from box geometry.

    This is an audit aid; the flags in ``attributes.txt`` stay authoritative.
    """
    fm, lr, arc = [], [], []
    prev = None
    for frame in seq.frames:
        box = None if frame.absent else frame.box
        if box is None:
            fm.append(False)
            lr.append(False)
            arc.append(False)
            prev = None
            continue
        lr.append(is_low_resolution(box))
        arc.append(is_aspect_ratio_outlier(box))
        fm.append(prev is not None and is_fast_motion(prev, box))
        prev = box
    return FrameAttributes(tuple(fm), tuple(lr), tuple(arc))


# --------------------------------------------------------------------------
# co-occurrence
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CoOccurrenceMatrix:
    counts: np.ndarray
    attributes: tuple[str, ...] = field(default=COOCCURRENCE_ATTRIBUTES)

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __getitem__(self, key: tuple[str, str]) -> int:
        a, b = key
        return int(self.counts[self.attributes.index(a), self.attributes.index(b)])

    def to_rows(self) -> list[list[int]]:
        return self.counts.tolist()


def co_occurrence(ds: Dataset | Iterable[Sequence]) -> CoOccurrenceMatrix:
    """Pairwise sequence counts; the diagonal holds per-attribute totals."""
    seqs = ds.sequences if isinstance(ds, Dataset) else tuple(ds)
    k = len(COOCCURRENCE_ATTRIBUTES)
    flags = np.array([s.attributes.flags[:k] for s in seqs], dtype=np.int64).reshape(-1, k)
    return CoOccurrenceMatrix(flags.T @ flags)
