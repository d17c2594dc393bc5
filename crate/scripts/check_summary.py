#!/usr/bin/env python3
"""Recompute benchmark aggregates from the raw CSV and diff them against
summary.json.

The benchmark harness writes per-trial rows (results.csv) and per-(n, solver)
aggregates (summary.json). This script is the independent integrity check: it
rebuilds every aggregate straight from the CSV — success rate = solved rows /
total rows, medians over the raw columns, mean buffers over all rows — and
exits nonzero if anything disagrees with the shipped summary.

Usage:
    check_summary.py BENCH_DIR
    check_summary.py --csv results.csv --summary summary.json
"""

import argparse
import csv
import json
import sys
from pathlib import Path

EXPECTED_HEADER = [
    "instance_id",
    "solver",
    "outcome",
    "wall_time_ms",
    "mp_calls",
    "expansions",
    "pruned",
    "buffers",
    "seed",
]

REL_TOL = 1e-9


def n_of(instance_id: str) -> int:
    """Object count from an id like ``n05_t12_h0123abcd...``."""
    head = instance_id.removeprefix("n").split("_", 1)[0]
    return int(head)


def median(values):
    ordered = sorted(values)
    if not ordered:
        return 0.0
    mid = len(ordered) // 2
    if len(ordered) % 2 == 1:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def close(a: float, b: float) -> bool:
    return abs(a - b) <= REL_TOL * max(1.0, abs(a), abs(b))


def recompute(csv_path: Path):
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != EXPECTED_HEADER:
            sys.exit(f"{csv_path}: unexpected header {reader.fieldnames}")
        rows = list(reader)

    groups = {}
    for row in rows:
        key = f"n={n_of(row['instance_id']):02d}/{row['solver']}"
        groups.setdefault(key, []).append(row)

    summary = {}
    for key, members in groups.items():
        solved = sum(1 for r in members if r["outcome"] == "solved")
        summary[key] = {
            "trials": len(members),
            "solved": solved,
            "success_rate": solved / len(members),
            "median_wall_ms": median(float(r["wall_time_ms"]) for r in members),
            "mean_buffers": sum(int(r["buffers"]) for r in members) / len(members),
            "median_mp_calls": median(float(r["mp_calls"]) for r in members),
            "median_expansions": median(float(r["expansions"]) for r in members),
        }
    return summary, len(rows)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("bench_dir", nargs="?", type=Path, help="directory holding results.csv and summary.json")
    ap.add_argument("--csv", type=Path, help="path to results.csv")
    ap.add_argument("--summary", type=Path, help="path to summary.json")
    args = ap.parse_args()

    if args.bench_dir is not None:
        csv_path = args.bench_dir / "results.csv"
        summary_path = args.bench_dir / "summary.json"
    elif args.csv and args.summary:
        csv_path, summary_path = args.csv, args.summary
    else:
        ap.error("give BENCH_DIR, or both --csv and --summary")

    recomputed, row_count = recompute(csv_path)
    shipped = json.loads(summary_path.read_text())

    problems = []
    for key in sorted(set(recomputed) | set(shipped)):
        if key not in shipped:
            problems.append(f"{key}: present in CSV but missing from summary")
            continue
        if key not in recomputed:
            problems.append(f"{key}: present in summary but has no CSV rows")
            continue
        mine, theirs = recomputed[key], shipped[key]
        for field, want in mine.items():
            got = theirs.get(field)
            if got is None:
                problems.append(f"{key}.{field}: missing from summary")
            elif not close(float(want), float(got)):
                problems.append(f"{key}.{field}: summary says {got}, CSV says {want}")

    if problems:
        for p in problems:
            print(f"MISMATCH {p}")
        print(f"check_summary: {len(problems)} mismatches across {len(recomputed)} groups")
        return 1
    print(f"check_summary: {row_count} rows, {len(recomputed)} groups — all aggregates match")
    return 0


if __name__ == "__main__":
    sys.exit(main())
