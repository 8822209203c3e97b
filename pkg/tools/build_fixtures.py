"""Regenerate the bundled fixtures under src/camo_bench/fixtures/.

The COTD attribute fixture is a flag assignment over 200 sequences whose
pairwise counts equal the reference co-occurrence table. It is found by
an integer program over attribute patterns (count of sequences per
pattern), with patterns containing a zero-count pair pruned up front.

    python tools/build_fixtures.py
"""

import itertools
import shutil
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from camo_bench.harness.fixtures import (
    COTD_COOCCURRENCE,
    COTD_SEQUENCE_COUNT,
    fixtures_root,
    write_cotd_fixture,
    write_demo_fixture,
)

SHUFFLE_SEED = 11


def solve_flag_rows():
    table = np.array(COTD_COOCCURRENCE)
    k = len(table)
    patterns = [
        p for p in itertools.product((0, 1), repeat=k)
        if all(table[i, j] > 0 for i in range(k) for j in range(i, k) if p[i] and p[j])
    ]
    P = np.array(patterns)
    rows, rhs = [], []
    for i in range(k):
        for j in range(i, k):
            rows.append(P[:, i] * P[:, j])
            rhs.append(table[i, j])
    A = np.array(rows)
    res = milp(
        c=np.ones(len(patterns)),
        constraints=[LinearConstraint(A, rhs, rhs),
                     LinearConstraint(np.ones((1, len(patterns))), 0, COTD_SEQUENCE_COUNT)],
        integrality=np.ones(len(patterns)),
        bounds=Bounds(0, COTD_SEQUENCE_COUNT),
    )
    if res.x is None:
        sys.exit(f"no feasible assignment: {res.message}")
    counts = np.round(res.x).astype(int)
    flag_rows = []
    for p, n in zip(patterns, counts):
        flag_rows.extend([p] * n)
    flag_rows.extend([(0,) * k] * (COTD_SEQUENCE_COUNT - len(flag_rows)))
    rng = np.random.default_rng(SHUFFLE_SEED)
    return [flag_rows[i] for i in rng.permutation(len(flag_rows))]


def main():
    root = fixtures_root()
    for sub in ("cotd_attributes", "demo"):
        shutil.rmtree(root / sub, ignore_errors=True)
    write_cotd_fixture(solve_flag_rows(), root / "cotd_attributes")
    write_demo_fixture(root / "demo")
    print(f"fixtures written under {Path(root)}")


if __name__ == "__main__":
    main()
