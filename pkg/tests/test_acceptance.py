"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are collected by ``conftest.record_acceptance`` and printed again in
the terminal summary, so ``pytest tests/test_acceptance.py`` ends with a
compact verdict table. The full-size reproduction of the simulation ordering
(criterion 10, full mode) needs ``--full``; the fast-mode variant always runs.
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from sparseinv import checks
from sparseinv.bench import ExperimentConfig, Setup, run_experiment, summarize
from sparseinv.cli import parse_and_dispatch

SEED = 1


def _gate(record_acceptance, label, result, limit_s=None):
    ok = result.passed and (limit_s is None or result.seconds < limit_s)
    extra = "" if limit_s is None else f" runtime {result.seconds:.1f}s (limit {limit_s:.0f}s)"
    record_acceptance(label, ok, result.line() + extra)
    assert result.passed, result.line()
    if limit_s is not None:
        assert result.seconds < limit_s, extra


def test_c01_exact_identities(record_acceptance):
    _gate(record_acceptance, "C1 exact identities", checks.check_identities(SEED), limit_s=10)


def test_c02_subadditivity(record_acceptance):
    _gate(record_acceptance, "C2 subadditivity", checks.check_subadditivity(SEED))


def test_c03_risk_decomposition(record_acceptance):
    _gate(record_acceptance, "C3 risk decomposition", checks.check_risk_decomposition(SEED), limit_s=30)


def test_c04_noise_tail_bound(record_acceptance):
    _gate(record_acceptance, "C4 noise tail bound", checks.check_noise_tail(SEED))


def test_c05_selection_oracle_inequality(record_acceptance):
    _gate(record_acceptance, "C5 selection oracle inequality", checks.check_selection_oracle(SEED), limit_s=300)


def test_c06_aggregation_oracle_inequality(record_acceptance):
    _gate(record_acceptance, "C6 aggregation oracle inequality", checks.check_aggregation_oracle(SEED))


def test_c07_annealing_finds_minimizer(record_acceptance):
    _gate(record_acceptance, "C7 annealing correctness", checks.check_annealing(SEED), limit_s=60)


def test_c08_simplex_solver(record_acceptance):
    _gate(record_acceptance, "C8 Q-solver vs grid search", checks.check_simplex_solver(SEED))


def test_c09_lasso(record_acceptance):
    _gate(record_acceptance, "C9 lasso KKT / closed form", checks.check_lasso(SEED))


# --- criterion 10: ordering of the four estimators ----------------------------

def _ordering(config, margin):
    """Run the f1 experiment; return (messages, all_ok, seconds)."""
    t0 = time.perf_counter()
    recs = run_experiment(config, Setup.from_config(config))
    seconds = time.perf_counter() - t0
    rows = {r["method"]: r for r in summarize(recs)}
    med = {m: rows[m]["median"] for m in rows}
    size = {m: rows[m]["median_size"] for m in rows}
    conditions = [
        ("oracle <= qagg", med["oracle"] <= med["qagg"], f"{med['oracle']:.4g} vs {med['qagg']:.4g}"),
        (f"qagg <= {margin:.2f}*sa", med["qagg"] <= margin * med["sa"], f"{med['qagg']:.4g} vs {med['sa']:.4g}"),
        ("sa < lasso", med["sa"] < med["lasso"], f"{med['sa']:.4g} vs {med['lasso']:.4g}"),
        ("size(sa) <= size(lasso)", size["sa"] <= size["lasso"], f"{size['sa']:g} vs {size['lasso']:g}"),
    ]
    messages = [f"{'ok ' if ok else 'BAD'} {name}: {info}" for name, ok, info in conditions]
    lams = {m: rows[m]["lambda"] for m in ("sa", "qagg")}
    messages.append(f"tuned lambda sa={lams['sa']:g} qagg={lams['qagg']:g}; {seconds:.0f}s")
    return messages, all(ok for _, ok, _ in conditions), seconds


FULL = ExperimentConfig(functions=("f1",), snr_list=(10.0,), replicates=100, r_max=100_000, record_tail=50,
                        master_seed=SEED)


def test_c10_ordering_fast_mode(record_acceptance):
    messages, ok, seconds = _ordering(replace(FULL, replicates=25, r_max=10_000), margin=1.10)
    ok_time = seconds < 600
    detail = "; ".join(messages) + ("" if ok_time else " (over 600 s)")
    record_acceptance("C10 ordering, fast mode", ok and ok_time, detail)
    assert ok, detail
    assert ok_time, detail


@pytest.mark.full
def test_c10_ordering_full(record_acceptance):
    messages, ok, _ = _ordering(FULL, margin=1.05)
    detail = "; ".join(messages)
    record_acceptance("C10 ordering, full mode", ok, detail)
    assert ok, detail


# --- criterion 11: byte-identical reruns --------------------------------------

def test_c11_bench_determinism(tmp_path, record_acceptance):
    cfg = tmp_path / "det.cfg"
    cfg.write_text("n = 64\nfunctions = f1 f4\nsnr_list = 10 5\nmethods = oracle sa qagg lasso\n"
                   "lambda_grid = 2 8\nlasso_grid = 4 16\ntuning_replicates = 2\nreplicates = 3\nr_max = 2000\n")
    outputs = []
    for k, jobs in enumerate(("1", "1", "2")):
        out = tmp_path / f"run{k}.csv"
        assert parse_and_dispatch(["bench", "--config", str(cfg), "--seed", "11", "--jobs", jobs,
                                   "--out", str(out)]) == 0
        outputs.append(out.read_bytes())
    ok = outputs[0] == outputs[1] == outputs[2]
    rows = outputs[0].count(b"\n") - 1
    record_acceptance("C11 determinism", ok, f"3 bench runs (serial, serial, 2 workers), {rows} rows each, "
                                            f"{'identical' if ok else 'DIFFERENT'} bytes")
    assert ok
    assert not np.isnan([float(line.split(b",")[5]) for line in outputs[0].splitlines()[1:]]).any()
