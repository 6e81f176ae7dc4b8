"""Batch runner: scenarios x protocols x seeds -> report files and a CSV summary."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import PHASES, ConfigError, ScenarioConfig, bundled_phase, load_config
from .engine import simulate
from .report import MessageStats, StatsCollector, format_csv, format_report
from .routing import Protocol

log = logging.getLogger("pnesim")


def run_one(cfg: ScenarioConfig, protocol: str) -> MessageStats:
    collector = StatsCollector()
    simulate(cfg, protocol, [collector])
    return collector.finalize()


def _job(args):
    cfg, protocol = args
    return run_one(cfg, protocol)


def report_name(cfg: ScenarioConfig, protocol: str) -> str:
    return f"{cfg.name}_{protocol}_seed{cfg.seed}.txt"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pnesim", description=__doc__)
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=Path, nargs="+", help="scenario config file(s)")
    src.add_argument("--phase", type=int, nargs="+", choices=PHASES, help="bundled phase config(s)")
    ap.add_argument("--protocol", nargs="+", choices=[p.value for p in Protocol], default=["epidemic"])
    ap.add_argument("--seed", type=int, help="first seed (default: the config's own)")
    ap.add_argument("--runs", type=int, default=1, help="consecutive seeds per scenario/protocol")
    ap.add_argument("--duration-scale", type=float, default=1.0)
    ap.add_argument("--step", type=float, help="override the engine step (seconds)")
    ap.add_argument("--out", type=Path, default=Path("results"), help="report directory")
    ap.add_argument("--csv", type=Path, help="cross-run summary CSV (default: <out>/summary.csv when --runs > 1)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.runs < 1 or args.jobs < 1 or args.duration_scale <= 0 or (args.step is not None and args.step <= 0):
        ap.print_usage(sys.stderr)
        print("pnesim: error: --runs, --jobs, --duration-scale and --step must be positive", file=sys.stderr)
        return 2
    try:
        bases = [bundled_phase(p) for p in args.phase] if args.phase else [load_config(p) for p in args.scenario]
    except (ConfigError, OSError) as e:
        print(f"pnesim: config error: {e}", file=sys.stderr)
        return 1

    jobs = []
    for base in bases:
        first = base.seed if args.seed is None else args.seed
        for protocol in args.protocol:
            for k in range(args.runs):
                jobs.append((base.scaled(args.duration_scale, args.step, first + k), protocol))

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = []
        for cfg, protocol in jobs:
            log.info("running %s / %s / seed %d", cfg.name, protocol, cfg.seed)
            results.append(run_one(cfg, protocol))

    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for (cfg, protocol), stats in zip(jobs, results):
        header = {"scenario": cfg.name, "protocol": protocol, "seed": cfg.seed,
                  "duration": cfg.duration, "step": cfg.step, "hosts": cfg.host_count}
        (args.out / report_name(cfg, protocol)).write_text(format_report(stats, header))
        rows.append((cfg.name, protocol, cfg.seed, stats))
    csv_path = args.csv or (args.out / "summary.csv" if args.runs > 1 else None)
    if csv_path is not None:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(format_csv(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
