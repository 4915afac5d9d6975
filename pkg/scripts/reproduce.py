"""Reproduce the simulation ordering on f1 (or any config) and print medians.

Usage:
    python scripts/reproduce.py                       # full f1 run, ~2 h single-threaded
    python scripts/reproduce.py --fast                # r_max 10,000, 25 replicates
    python scripts/reproduce.py --config scripts/full_study.cfg --jobs 4

Writes the per-replicate CSV and a summary CSV next to each other and prints
the median relative error and median model size per method.
"""
import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from sparseinv.bench import load_config, run_experiment, summarize, write_csv

HERE = Path(__file__).resolve().parent


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=str(HERE / "paper_f1.cfg"))
    parser.add_argument("--seed", type=int, default=1, help="master seed")
    parser.add_argument("--fast", action="store_true", help="r_max 10,000 and 25 replicates")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="results.csv")
    args = parser.parse_args(argv)

    config = load_config(args.config, {"master_seed": args.seed, "jobs": args.jobs})
    if args.fast:
        config = replace(config, r_max=10_000, replicates=25)
    t0 = time.perf_counter()
    records = run_experiment(config)
    write_csv(args.out, records)
    rows = summarize(records)
    print(f"{'function':>8} {'snr':>5} {'method':>7} {'lambda':>7} {'median':>11} {'q25':>11} "
          f"{'q75':>11} {'size':>5}")
    for r in rows:
        print(f"{r['function']:>8} {r['snr']:>5g} {r['method']:>7} {r['lambda']:>7g} {r['median']:>11.4g} "
              f"{r['q25']:>11.4g} {r['q75']:>11.4g} {r['median_size']:>5g}")
    print(f"{len(records)} records -> {args.out} ({time.perf_counter() - t0:.0f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
