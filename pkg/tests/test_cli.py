import numpy as np
import pytest

from sparseinv import cli, records
from sparseinv.aggregate import build_candidates, solve_weights
from sparseinv.checks import CheckResult
from sparseinv.estimator import Model, ModelSpace, PenaltyRule, fit_projection
from sparseinv.lasso import fit_lasso
from sparseinv.operator import back_transform
from sparseinv.search import SAConfig, run_sa

SMALL = ["--n", "16", "--dictionary", "small"]


# --- record files ---------------------------------------------------------------

def test_model_text_is_one_based():
    assert records.fmt_model(Model((0, 4))) == "1 5"
    assert records.parse_model("1 5") == Model((0, 4))
    assert records.parse_model("") == Model()


def test_fit_record_round_trip(small16, rng):
    op, d, dual = small16
    obs = back_transform(op, rng.standard_normal(16), 0.3)
    fit = fit_projection(obs, d, dual, Model((2, 9)), PenaltyRule(0.3, 1.0, d.p))
    kind, items = records.parse_record(records.fit_record(fit))
    values = dict(items)
    assert kind == "projection_fit"
    assert records.parse_model(values["model"]) == fit.model
    coef = np.array([float(t) for t in values["coefficients"].split()])
    np.testing.assert_array_equal(coef, fit.coefficients)
    assert float(values["objective"]) == fit.objective
    assert float(values["penalty"]) == fit.penalty


def test_trace_weights_lasso_records(small16, rng):
    op, d, dual = small16
    obs = back_transform(op, op.A @ d.Phi[:, [1, 7]].sum(axis=1) + 0.1 * rng.standard_normal(16), 0.1)
    pen = PenaltyRule(0.1, 1.0, d.p)
    trace = run_sa(obs, d, dual, pen, ModelSpace(d.p, 6), SAConfig(r_max=2000, seed=1, record_tail=5))
    kind, items = records.parse_record(records.trace_record(trace))
    assert kind == "sa_trace"
    tails = [v for k, v in items if k == "tail"]
    assert len(tails) == len(trace.visited_tail)
    obj, _, model = tails[0].partition(" : ")
    assert records.parse_model(model) == trace.visited_tail[0]
    assert float(obj) == trace.tail_objectives[0]

    cand = build_candidates(obs, d, dual, trace.visited_tail, pen)
    w = solve_weights(cand, obs.z)
    kind, items = records.parse_record(records.weights_record(cand, w))
    weights = [float(v.split(" : ")[0]) for k, v in items if k == "weight"]
    assert kind == "aggregation_weights" and sum(weights) == pytest.approx(1.0)

    lfit = fit_lasso(obs.y, d, dual, 0.05)
    kind, items = records.parse_record(records.lasso_record(lfit))
    coefs = {int(v.split()[0]) - 1: float(v.split()[1]) for k, v in items if k == "coef"}
    assert set(coefs) == set(lfit.support)
    assert all(coefs[j] == lfit.coefficients[j] for j in coefs)


# --- command line -------------------------------------------------------------

def test_unknown_flag_is_usage_error(capsys):
    assert cli.parse_and_dispatch(["fit", "--bogus"]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err and "ERROR 1:" in err


def test_seed_required(capsys):
    for argv in (["check"], ["bench"], ["gen"], ["fit", "--method", "sa"]):
        assert cli.parse_and_dispatch(argv) == 1
        assert "ERROR 1:" in capsys.readouterr().err


def test_help_lists_defaults(capsys):
    assert cli.parse_and_dispatch(["fit", "--help"]) == 0
    out = capsys.readouterr().out
    assert "--rmax" in out and "default: 100000" in out and "--tail" in out


def test_check_exit_codes(monkeypatch, capsys):
    ok = CheckResult("dummy", True, 0.0, 1.0)
    bad = CheckResult("dummy", False, 2.0, 1.0)
    monkeypatch.setattr(cli, "invariant_suite", lambda seed, log=None: [ok])
    assert cli.parse_and_dispatch(["check", "--seed", "1"]) == 0
    monkeypatch.setattr(cli, "invariant_suite", lambda seed, log=None: [ok, bad])
    assert cli.parse_and_dispatch(["check", "--seed", "1"]) == 3
    assert capsys.readouterr().err.startswith("ERROR 3:")


def test_singular_operator_exit_code(tmp_path, capsys):
    mat = tmp_path / "A.txt"
    mat.write_text("\n".join(" ".join("1" if (i == j and i < 15) else "0" for j in range(16)) for i in range(16)))
    assert cli.parse_and_dispatch(["fit", "--operator", f"file:{mat}", *SMALL, "--method", "lasso",
                                   "--seed", "1"]) == 2
    assert capsys.readouterr().err.startswith("ERROR 2: SingularOperator")


def test_gen_then_fit_from_file(tmp_path, capsys):
    assert cli.parse_and_dispatch(["gen", "--seed", "4", "--out", str(tmp_path), "--n", "64",
                                   "--function", "f2", "--snr", "7"]) == 0
    meta = dict(records.parse_record((tmp_path / "meta.txt").read_text())[1])
    assert meta["function"] == "f2"
    y = records.read_vector(tmp_path / "y.txt")
    assert y.shape == (64,)
    out = tmp_path / "fit.txt"
    argv = ["fit", "--n", "64", "--method", "sa", "--y", str(tmp_path / "y.txt"), "--sigma", meta["sigma"],
            "--rmax", "3000", "--lambda", "4", "--seed", "2", "--out", str(out)]
    assert cli.parse_and_dispatch(argv) == 0
    first = out.read_text()
    assert cli.parse_and_dispatch(argv) == 0
    assert out.read_text() == first
    assert "# sa_trace" in first and "# projection_fit" in first
    assert cli.parse_and_dispatch(["fit", "--n", "64", "--y", str(tmp_path / "y.txt"), "--method", "lasso"]) == 1


@pytest.mark.parametrize("method", ["oracle", "qagg", "lasso", "model"])
def test_fit_methods(method, capsys):
    argv = ["fit", "--n", "64", "--method", method, "--seed", "3", "--rmax", "2000", "--model", "1 2"]
    if method == "lasso":
        argv += ["--lambda", "0.1"]
    assert cli.parse_and_dispatch(argv) == 0
    out = capsys.readouterr().out
    assert "rel_error = " in out


def test_oracle_subcommand(capsys):
    assert cli.parse_and_dispatch(["oracle", *SMALL, "--function", "f4", "--size-cap", "2"]) == 0
    values = dict(records.parse_record(capsys.readouterr().out)[1])
    assert float(values["total"]) == pytest.approx(float(values["bias_sq"]) + float(values["variance"]))


def test_bench_row_count_and_determinism(tmp_path):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("n = 64\nfunctions = f1 f2\nsnr_list = 10 5\nmethods = oracle lasso\n"
                   "lasso_grid = 8 16\ntuning_replicates = 2\nreplicates = 2\n")
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (out1, out2):
        assert cli.parse_and_dispatch(["bench", "--config", str(cfg), "--seed", "3", "--out", str(out),
                                       "--summary", str(tmp_path / "s.csv")]) == 0
    lines = out1.read_text().splitlines()
    assert lines[0] == "run_id,method,function,snr,lambda,rel_error,model_size,seed,wall_time_ms"
    assert len(lines) - 1 == 2 * 2 * 2 * 2
    assert out1.read_bytes() == out2.read_bytes()
    assert cli.parse_and_dispatch(["bench", "--config", str(cfg), "--seed", "3", "--set", "colour=red"]) == 1
