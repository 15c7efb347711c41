#!/usr/bin/env python3
"""Run the full benchmark grid (3 workloads x 5 user counts x 3
topologies, 5 repetitions each on virtual time) and write the
per-repetition CSV. Prints every cell as it completes, then the trend
verdicts and the calibration table.

    python3 scripts/run_bench_matrix.py --seed 42 --out results.csv
"""
import argparse
import sys
import time

from bonik.bench import emit_csv, run_matrix
from bonik.cli import _print_matrix_summary, _print_report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--duration", type=float, default=60.0)
    parser.add_argument("--repetitions", type=int, default=5)
    parser.add_argument("--out", default="results.csv")
    args = parser.parse_args(argv)

    started = time.monotonic()
    matrix = run_matrix(
        seed=args.seed,
        duration_s=args.duration,
        repetitions=args.repetitions,
        progress=_print_report,
    )
    _print_matrix_summary(matrix)
    emit_csv(matrix.reports, args.out)
    print(f"\nwrote {args.out} in {time.monotonic() - started:.1f}s wall time")
    return 0 if matrix.all_trends_hold else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
