#!/usr/bin/env python3
"""Vertex-feature extraction timing versus mesh size.

Times capture_frame over seeded point clouds (600 up to 2 million vertices
by default) and reports the median/p95 per count plus the linear-fit R^2.
Absolute milliseconds are machine-specific.
"""

import argparse
import sys

from vertexslam.harness.bench import benchmark_capture


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--counts", default="600,60000,240000,480000,2000000")
    parser.add_argument("--repetitions", type=int, default=51)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", help="write the table to this CSV path")
    args = parser.parse_args()

    counts = [int(c) for c in args.counts.split(",")]
    report = benchmark_capture(counts, repetitions=args.repetitions, seed=args.seed)
    print(f"{'vertices':>10} {'median_ms':>10} {'p95_ms':>10} {'features':>9}")
    for row in report.rows:
        print(f"{row.count:>10} {row.median_ms:>10.3f} {row.p95_ms:>10.3f} "
              f"{row.features:>9}")
    if report.r_squared is not None:
        print(f"linear fit: {report.slope_ms_per_vertex * 1e6:.3f} ns/vertex + "
              f"{report.intercept_ms:.3f} ms, R^2 = {report.r_squared:.5f}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report.csv_text())
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
