"""``camo-bench`` command line.

Exit codes: 0 success, 1 validation findings, 2 missing data,
3 format or configuration error. Diagnostics go to stderr; tables and
machine-readable output go to stdout or files.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from camo_bench.dataset import (
    COOCCURRENCE_ATTRIBUTES,
    RULES_NOT_EVALUATED,
    co_occurrence,
    derive_frame_attributes,
    load_dataset,
    validate_rules,
)
from camo_bench.encoder.checks import run_encoder_checks
from camo_bench.encoder.config import EncoderConfig, load_config
from camo_bench.errors import ConfigError, EmptyEvaluationError, FormatError, MissingDataError
from camo_bench.harness.fixtures import build_cotd_attribute_fixture, write_cotd_fixture, write_demo_fixture
from camo_bench.harness.report import (
    discover_trackers,
    dumps_json,
    emit_ranking,
    emit_report,
    format_ranking_table,
    load_tracker_results,
)
from camo_bench.metrics import RANK_KEYS, evaluate

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_MISSING = 2
EXIT_FORMAT = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 means missing data here
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_FORMAT)


def _err(msg: str):
    print(msg, file=sys.stderr)


def cmd_eval(args) -> int:
    ds = load_dataset(args.dataset_root)
    trackers = args.trackers or discover_trackers(args.results_root)
    if not trackers:
        raise MissingDataError(f"no tracker directories under {args.results_root}")
    # load everything first so a missing file leaves no partial reports behind
    results = [load_tracker_results(args.results_root, name, ds) for name in trackers]
    out_dir = Path(args.out)
    reports = []
    for result in results:
        _err(f"evaluating {result.tracker_name} on {len(ds)} sequences")
        reports.append(evaluate(result, ds, per_attribute=args.per_attribute, aggregation=args.aggregation))
    for report in reports:
        emit_report(report, out_dir)
    emit_ranking(reports, out_dir, args.rank_by)
    sys.stdout.write(format_ranking_table(reports, args.rank_by))
    return EXIT_OK


def cmd_validate(args) -> int:
    ds = load_dataset(args.dataset_root)
    violations = [v for seq in ds for v in validate_rules(seq)]
    for v in violations:
        print(f"{v.sequence}\trule {v.rule}\tframe {v.frame}\t{v.message}")
    _err(f"{len(ds)} sequences, {len(violations)} violations "
         f"(rules {', '.join(RULES_NOT_EVALUATED)} not evaluated: need image content)")
    return EXIT_FINDINGS if violations else EXIT_OK


def _flag(value: bool) -> str:
    return "1" if value else "0"


def cmd_attributes(args) -> int:
    ds = load_dataset(args.dataset_root)
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    if not args.audit:
        writer.writerow(["sequence", "category", "attributes"])
        for seq in ds:
            writer.writerow([seq.name, seq.category, ",".join(seq.attributes.names())])
        sys.stdout.write(buf.getvalue())
        return EXIT_OK
    writer.writerow(["sequence", "declared_FM", "declared_LR", "declared_ARC",
                     "derived_FM", "derived_LR", "derived_ARC", "status"])
    disagreements = 0
    for seq in ds:
        declared = [_flag(seq.attributes[a]) for a in ("FM", "LR", "ARC")]
        if not seq.has_geometry:
            writer.writerow([seq.name, *declared, "n/a", "n/a", "n/a", "n/a"])
            continue
        derived = derive_frame_attributes(seq).sequence_flags()
        derived_cols = [_flag(derived[a]) for a in ("FM", "LR", "ARC")]
        agree = declared == derived_cols
        disagreements += not agree
        writer.writerow([seq.name, *declared, *derived_cols, "agree" if agree else "disagree"])
    sys.stdout.write(buf.getvalue())
    _err(f"{len(ds)} sequences audited, {disagreements} disagree with declared flags")
    return EXIT_OK


def cmd_cooccur(args) -> int:
    if args.cotd_fixture:
        ds = build_cotd_attribute_fixture()
    elif args.dataset_root:
        ds = load_dataset(args.dataset_root)
    else:
        raise ConfigError("give a dataset root or --cotd-fixture")
    matrix = co_occurrence(ds)
    if args.format == "json":
        text = dumps_json({"attributes": list(COOCCURRENCE_ATTRIBUTES), "counts": matrix.to_rows()})
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["attribute", *COOCCURRENCE_ATTRIBUTES])
        for name, row in zip(COOCCURRENCE_ATTRIBUTES, matrix.to_rows()):
            writer.writerow([name, *row])
        text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_encoder_check(args) -> int:
    config = load_config(args.config) if args.config else EncoderConfig()
    results, payload = run_encoder_checks(config, gradients=not args.skip_gradients)
    for r in results:
        _err(r.line())
    for entry in payload["gamma_sweep"]:
        print(f"gamma={entry['gamma']:.1f}\t{entry['sha256']}")
    if args.json:
        Path(args.json).write_text(dumps_json(payload))
    failed = [r for r in results if not r.passed]
    _err(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FINDINGS if failed else EXIT_OK


def cmd_fixtures(args) -> int:
    out = Path(args.out_dir)
    ds_root, results_root = write_demo_fixture(out / "demo")
    _err(f"demo dataset: {ds_root}\ndemo results: {results_root}")
    if args.cotd:
        ds = build_cotd_attribute_fixture()
        rows = [s.attributes.flags[: len(COOCCURRENCE_ATTRIBUTES)] for s in ds]
        path = write_cotd_fixture(rows, out / "cotd_attributes")
        _err(f"COTD attribute fixture: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="camo-bench", description="Camouflaged-object tracking benchmark toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", help="one-pass evaluation of tracker results")
    p.add_argument("dataset_root")
    p.add_argument("results_root", help="directory holding one sub-directory per tracker")
    p.add_argument("--trackers", nargs="+", help="tracker names (default: every sub-directory)")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--per-attribute", action="store_true", help="also report each attribute subset")
    agg = p.add_mutually_exclusive_group()
    agg.add_argument("--pooled", dest="aggregation", action="store_const", const="pooled")
    agg.add_argument("--averaged", dest="aggregation", action="store_const", const="averaged")
    p.add_argument("--rank-by", choices=RANK_KEYS, default="auc")
    p.set_defaults(func=cmd_eval, aggregation="pooled")

    p = sub.add_parser("validate", help="check annotation rules")
    p.add_argument("dataset_root")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("attributes", help="list attributes or audit FM/LR/ARC against geometry")
    p.add_argument("dataset_root")
    p.add_argument("--audit", action="store_true")
    p.set_defaults(func=cmd_attributes)

    p = sub.add_parser("cooccur", help="attribute co-occurrence matrix")
    p.add_argument("dataset_root", nargs="?")
    p.add_argument("--cotd-fixture", action="store_true", help="use the bundled COTD attribute fixture")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cooccur)

    p = sub.add_parser("encoder-check", help="run the encoder invariant suite")
    p.add_argument("config", nargs="?", help="key=value config file (default: built-in defaults)")
    p.add_argument("--json", help="write checks, gamma sweep and diagnostics here")
    p.add_argument("--skip-gradients", action="store_true")
    p.set_defaults(func=cmd_encoder_check)

    p = sub.add_parser("fixtures", help="write the synthetic demo fixture (and optionally the COTD one)")
    p.add_argument("out_dir")
    p.add_argument("--cotd", action="store_true")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MissingDataError as exc:
        _err(f"error: {exc}")
        return EXIT_MISSING
    except (FormatError, ConfigError, EmptyEvaluationError) as exc:
        _err(f"error: {exc}")
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
