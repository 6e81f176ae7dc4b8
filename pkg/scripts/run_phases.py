"""Run the four bundled phases under both protocols and tabulate the means.

Writes per-run reports and summary.csv to --out, then prints one row per
(phase, protocol) with the seed-averaged delivery probability, overhead
ratio and average latency.
"""

import argparse
import csv
import statistics
import time
from collections import defaultdict
from pathlib import Path

from pnesim.cli import main as pnesim_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--phase", type=int, nargs="+", default=[1, 2, 3, 4])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--duration-scale", type=float, default=0.1)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/phases"))
    args = ap.parse_args()

    argv = ["--phase", *map(str, args.phase), "--protocol", "epidemic", "prophet",
            "--seed", str(args.seed), "--runs", str(args.runs),
            "--duration-scale", str(args.duration_scale), "--jobs", str(args.jobs), "--out", str(args.out),
            "--csv", str(args.out / "summary.csv")]
    start = time.perf_counter()
    code = pnesim_main(argv)
    if code:
        raise SystemExit(code)
    elapsed = time.perf_counter() - start

    cells = defaultdict(list)
    with (args.out / "summary.csv").open() as f:
        for row in csv.DictReader(f):
            cells[(row["phase"], row["protocol"])].append(row)

    def mean(rows, key):
        vals = [float(r[key]) for r in rows if r[key] not in ("", "NA")]
        return statistics.fmean(vals) if vals else float("nan")

    print(f"{'phase':<8}{'protocol':<10}{'runs':>5}{'delivery':>10}{'overhead':>10}{'latency_s':>11}")
    for (phase, protocol), rows in sorted(cells.items()):
        print(f"{phase:<8}{protocol:<10}{len(rows):>5}{mean(rows, 'delivery_prob'):>10.4f}"
              f"{mean(rows, 'overhead_ratio'):>10.2f}{mean(rows, 'latency_avg'):>11.1f}")
    print(f"{sum(len(r) for r in cells.values())} runs in {elapsed:.0f}s")


if __name__ == "__main__":
    main()
