"""Diagnostic: sensitivity of the sa / qagg gap to the scale of the data.

Rescaling the truth and the noise level by the same factor ``c`` leaves every
relative error of a projection estimator unchanged, but multiplies the
annealing objective by ``c**2``. Because the cooling schedule is absolute
(T = 1 / (1 + ln r)), this is equivalent to running the chain ``c**2`` times
colder. The script reports median relative errors of ``sa`` and ``qagg`` on f1
for a few scales and penalty multipliers.

Usage: python scripts/temperature_scale.py [--replicates 25] [--rmax 10000]
"""
import argparse
import math

import numpy as np

from sparseinv.bench import (
    EVAL_STREAM,
    ExperimentConfig,
    Setup,
    build_test_function,
    fit_method,
    relative_error,
    replicate_seed,
    synthesize_observation,
)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--replicates", type=int, default=25)
    parser.add_argument("--rmax", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--lambdas", type=float, nargs="+", default=[2.0, 4.0, 8.0])
    parser.add_argument("--scales", type=float, nargs="+", default=[1.0, math.sqrt(128)])
    args = parser.parse_args(argv)

    config = ExperimentConfig(functions=("f1",), snr_list=(10.0,), r_max=args.rmax, master_seed=args.seed)
    setup = Setup.from_config(config)
    base = build_test_function("f1", setup.dictionary)
    print(f"{'scale':>7} {'lambda':>6} {'sa':>10} {'qagg':>10} {'qagg/sa':>8} {'size sa':>7} {'size qagg':>9}")
    for c in args.scales:
        tf = build_test_function("f1", setup.dictionary, norm=c * float(np.linalg.norm(base.vector)))
        for lam in args.lambdas:
            err = {"sa": [], "qagg": []}
            size = {"sa": [], "qagg": []}
            for rep in range(args.replicates):
                seed = replicate_seed(config.master_seed, EVAL_STREAM, 0, 0, rep)
                obs = synthesize_observation(setup.op, tf, 10.0, [seed, 0])
                cache: dict = {}
                for method in ("sa", "qagg"):
                    est, k = fit_method(method, setup, obs, lam, config, [seed, 1], tf, cache)
                    err[method].append(relative_error(tf.vector, est))
                    size[method].append(k)
            med = {m: float(np.median(v)) for m, v in err.items()}
            print(f"{c:7.3g} {lam:6g} {med['sa']:10.4g} {med['qagg']:10.4g} {med['qagg'] / med['sa']:8.2f} "
                  f"{np.median(size['sa']):7g} {np.median(size['qagg']):9g}")


if __name__ == "__main__":
    main()
