"""Run the small-scale invariant suite and print one line per check.

Usage: python scripts/run_checks.py [--seed N]
Exit status is 0 when every check passes and 3 otherwise (same as
``sparseinv check``).
"""
import argparse
import sys

from sparseinv.checks import invariant_suite


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args(argv)
    results = invariant_suite(args.seed, log=print)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 3 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
