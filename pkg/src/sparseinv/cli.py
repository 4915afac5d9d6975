"""Command-line front end: ``gen``, ``fit``, ``bench``, ``oracle`` and ``check``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 failed checks.
Errors go to standard error as one line prefixed ``ERROR <code>:``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, records
from .aggregate import build_candidates, solve_weights
from .bench import ExperimentConfig, Setup
from .checks import invariant_suite
from .errors import SparseInvError
from .estimator import ModelSpace, PenaltyRule, fit_projection, oracle_search
from .lasso import fit_lasso
from .operator import back_transform
from .search import SAConfig, run_sa

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("sparseinv")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class _DefaultsFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Show defaults, except for flags whose default is None (unset)."""

    def _get_help_string(self, action):
        if action.default is None:
            return action.help
        return super()._get_help_string(action)


def _formatter(prog):
    return _DefaultsFormatter(prog, max_help_position=32)


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--operator", default="exp", help="'exp' or 'file:<path>' (dense matrix text)")
    p.add_argument("--n", type=int, default=128, help="grid size for the exponential operator")
    p.add_argument("--dictionary", default="paper", help="'paper', 'small' or 'file:<path>'")
    p.add_argument("-v", "--verbose", action="count", default=0, help="increase log verbosity")


def _add_truth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--function", default="f1", choices=bench.FUNCTION_IDS, help="test function")
    p.add_argument("--snr", type=float, default=10.0, help="signal-to-noise ratio ||f|| / sigma")
    p.add_argument("--f4-norm", type=float, default=None, help="rescale f4 to this norm")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparseinv", description=__doc__.splitlines()[0], formatter_class=_formatter)
    sub = parser.add_subparsers(dest="command", metavar="{gen,fit,bench,oracle,check}", parser_class=_Parser)
    sub.required = True

    gen = sub.add_parser("gen", help="synthesize y, z and f to files", formatter_class=_formatter)
    _add_problem_flags(gen)
    _add_truth_flags(gen)
    gen.add_argument("--seed", type=int, default=None, help="noise seed (required)")
    gen.add_argument("--out", default=".", help="output directory for y.txt, z.txt, f.txt, meta.txt")

    fit = sub.add_parser("fit", help="compute one estimate", formatter_class=_formatter)
    _add_problem_flags(fit)
    _add_truth_flags(fit)
    fit.add_argument("--method", default="sa", choices=["sa", "qagg", "lasso", "oracle", "model"])
    fit.add_argument("--y", default=None, help="observation file; otherwise data are synthesized")
    fit.add_argument("--sigma", type=float, default=None, help="noise level (required with --y)")
    fit.add_argument("--lambda", dest="lam", type=float, default=4.0,
                     help="penalty multiplier (absolute value for lasso)")
    fit.add_argument("--rmax", type=int, default=100_000, help="annealing iterations")
    fit.add_argument("--tail", type=int, default=50, help="visited models kept for aggregation")
    fit.add_argument("--size-cap", type=int, default=None, help="largest model size (default n/2)")
    fit.add_argument("--model", default="", help="1-based atom indices for --method model")
    fit.add_argument("--seed", type=int, default=None, help="seed (required for sa/qagg and synthetic data)")
    fit.add_argument("--out", default=None, help="record file (default: standard output)")
    fit.add_argument("--estimate-out", default=None, help="write the estimate vector here")

    b = sub.add_parser("bench", help="run the simulation study, write CSV", formatter_class=_formatter)
    b.add_argument("--config", default=None, help="key = value configuration file")
    b.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key (repeatable)")
    b.add_argument("--seed", type=int, default=None, help="master seed (required)")
    b.add_argument("--jobs", type=int, default=None, help="worker processes (default 1)")
    b.add_argument("--replicates", type=int, default=None, help="override replicates")
    b.add_argument("--rmax", type=int, default=None, help="override r_max")
    b.add_argument("--out", default=None, help="CSV path (default: standard output)")
    b.add_argument("--summary", default=None, help="also write per-group quantiles here")
    b.add_argument("-v", "--verbose", action="count", default=0, help="increase log verbosity")

    o = sub.add_parser("oracle", help="exhaustive risk-minimizing model", formatter_class=_formatter)
    _add_problem_flags(o)
    _add_truth_flags(o)
    o.add_argument("--size-cap", type=int, default=2, help="largest model size enumerated")
    o.add_argument("--out", default=None, help="record file (default: standard output)")

    c = sub.add_parser("check", help="run the invariant suite", formatter_class=_formatter)
    c.add_argument("--seed", type=int, default=None, help="master seed (required)")
    c.add_argument("-v", "--verbose", action="count", default=0, help="increase log verbosity")
    return parser


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"'{args.command}' is stochastic and needs an explicit --seed")
    return args.seed


def _setup(args) -> Setup:
    cfg = ExperimentConfig(n=args.n, operator=args.operator, dictionary=args.dictionary)
    return Setup.from_config(cfg)


def _emit(text: str, path) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_gen(args) -> int:
    seed = _require_seed(args)
    setup = _setup(args)
    tf = bench.build_test_function(args.function, setup.dictionary, args.f4_norm)
    obs = bench.synthesize_observation(setup.op, tf, args.snr, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records.write_vector(out / "y.txt", obs.y)
    records.write_vector(out / "z.txt", obs.z)
    records.write_vector(out / "f.txt", tf.vector)
    (out / "meta.txt").write_text(
        f"function = {tf.id}\nsnr = {records.fmt_float(args.snr)}\nsigma = {records.fmt_float(obs.sigma)}\n"
        f"seed = {seed}\nn = {setup.op.n}\n")
    return EXIT_OK


def _observation(args, setup: Setup):
    if args.y is not None:
        if args.sigma is None:
            raise UsageError("--y requires --sigma")
        y = records.read_vector(args.y)
        return back_transform(setup.op, y, args.sigma, {"source": args.y}), None
    seed = _require_seed(args)
    tf = bench.build_test_function(args.function, setup.dictionary, args.f4_norm)
    return bench.synthesize_observation(setup.op, tf, args.snr, seed), tf


def _cmd_fit(args) -> int:
    if args.method in ("sa", "qagg"):
        _require_seed(args)
    setup = _setup(args)
    d, dual = setup.dictionary, setup.dual
    obs, tf = _observation(args, setup)
    cap = args.size_cap if args.size_cap is not None else d.n // 2
    pen = PenaltyRule(obs.sigma, args.lam, d.p) if args.method != "lasso" else None
    if args.method == "lasso":
        fit = fit_lasso(obs.y, d, dual, args.lam)
        text, estimate = records.lasso_record(fit), fit.fitted
    elif args.method in ("sa", "qagg"):
        cfg = SAConfig(r_max=args.rmax, seed=args.seed, record_tail=args.tail)
        trace = run_sa(obs, d, dual, pen, ModelSpace(d.p, cap), cfg)
        text = records.trace_record(trace)
        if args.method == "sa":
            best = fit_projection(obs, d, dual, trace.best_model, pen)
            text += records.fit_record(best)
            estimate = best.fitted
        else:
            cand = build_candidates(obs, d, dual, trace.visited_tail, pen)
            weights = solve_weights(cand, obs.z)
            text += records.weights_record(cand, weights)
            estimate = cand.fitted_matrix @ weights.weights
    else:
        if args.method == "oracle":
            if tf is None or tf.id == "f4":
                raise UsageError("--method oracle needs a synthetic f1-f3 truth")
            model = bench.true_model(tf, d)
        else:
            model = records.parse_model(args.model)
        fit = fit_projection(obs, d, dual, model, pen)
        text, estimate = records.fit_record(fit), fit.fitted
    if tf is not None:
        text += f"rel_error = {records.fmt_float(bench.relative_error(tf.vector, estimate))}\n"
    _emit(text, args.out)
    if args.estimate_out:
        records.write_vector(args.estimate_out, estimate)
    return EXIT_OK


def _bench_config(args) -> ExperimentConfig:
    seed = _require_seed(args)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        overrides[key.strip()] = bench.coerce_config_value(key.strip(), raw)
    overrides["master_seed"] = seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.rmax is not None:
        overrides["r_max"] = args.rmax
    return bench.load_config(args.config, overrides)


def _cmd_bench(args) -> int:
    cfg = _bench_config(args)
    recs = bench.run_experiment(cfg)
    _emit(bench.records_to_csv(recs), args.out)
    if args.summary:
        rows = bench.summarize(recs)
        keys = list(rows[0]) if rows else []
        lines = [",".join(keys)] + [",".join(str(r[k]) for k in keys) for r in rows]
        Path(args.summary).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    setup = _setup(args)
    d = setup.dictionary
    tf = bench.build_test_function(args.function, d, args.f4_norm)
    sigma = bench.sigma_for_snr(tf.vector, args.snr)
    model, risk = oracle_search(setup.op, d, tf.vector, sigma, ModelSpace(d.p, args.size_cap), setup.dual)
    text = records._render("oracle", [
        ("model", records.fmt_model(model)),
        ("bias_sq", records.fmt_float(risk.bias_sq)),
        ("variance", records.fmt_float(risk.variance)),
        ("total", records.fmt_float(risk.total)),
        ("sigma", records.fmt_float(sigma)),
    ])
    _emit(text, args.out)
    return EXIT_OK


def _cmd_check(args) -> int:
    seed = _require_seed(args)
    results = invariant_suite(seed, log=print)
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"ERROR {EXIT_CHECK}: {len(failed)} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


COMMANDS = {"gen": _cmd_gen, "fit": _cmd_fit, "bench": _cmd_bench, "oracle": _cmd_oracle, "check": _cmd_check}


def parse_and_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ERROR {EXIT_USAGE}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"ERROR {EXIT_USAGE}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SparseInvError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"ERROR {EXIT_NUMERIC}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"ERROR {EXIT_USAGE}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


def main() -> None:
    sys.exit(parse_and_dispatch())
