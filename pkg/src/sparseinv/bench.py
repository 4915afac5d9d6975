"""Simulation harness: test functions, noisy data at a given SNR, lambda tuning,
Monte Carlo replication and CSV output.

Seeding: every replicate gets an integer seed derived from
``(master_seed, stream, function index, snr index, replicate)`` through
``numpy.random.SeedSequence``; stream 0 is evaluation and stream 1 is
tuning, so the two never share noise. Within a replicate, the noise
generator uses ``[seed, 0]`` and the annealing chain uses ``[seed, 1]``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregate import aggregate_estimate, build_candidates, solve_weights
from .dictionary import (
    Dictionary,
    DualDictionary,
    Family,
    build_dual,
    build_paper_dictionary,
    build_small_dictionary,
    load_dictionary,
)
from .errors import SparseInvError, ZeroTruth
from .estimator import Model, ModelSpace, PenaltyRule, fit_projection, oracle_search
from .lasso import fit_lasso, lasso_path, support_size
from .operator import ForwardOperator, Observation, back_transform, build_exponential_operator, load_operator
from .search import SAConfig, run_sa

log = logging.getLogger(__name__)

DS, DW = Family.DAUBECHIES_SCALING, Family.DAUBECHIES_WAVELET
HS, HW = Family.HAAR_SCALING, Family.HAAR_WAVELET

FUNCTION_ATOMS = {
    "f1": [(DS, 3, 4), (HS, 3, 0)],
    "f2": [(DS, 3, 0), (DS, 3, 6), (DW, 3, 7), (HS, 3, 6)],
    "f3": [(DS, 3, 1), (DS, 3, 5), (DS, 3, 7), (DW, 3, 0), (DW, 3, 3), (DW, 3, 5), (HS, 3, 0), (HS, 3, 3)],
}
SPARSITY = {"f1": "high", "f2": "moderate", "f3": "low", "f4": "uncontrolled"}
FUNCTION_IDS = ("f1", "f2", "f3", "f4")
METHODS = ("oracle", "sa", "qagg", "lasso")

CSV_HEADER = ["run_id", "method", "function", "snr", "lambda", "rel_error", "model_size", "seed", "wall_time_ms"]

EVAL_STREAM, TUNE_STREAM = 0, 1


@dataclass(frozen=True, eq=False)
class TestFunction:
    id: str
    vector: np.ndarray
    construction: tuple  # (family, level, shift) triples, or ("Analytic",)
    sparsity_label: str

    __test__ = False  # not a pytest class


def heavisine(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return 4.0 * np.sin(4.0 * np.pi * t) - np.sign(t - 0.3) - np.sign(0.72 - t)


def build_test_function(fid: str, dictionary: Dictionary, norm: float | None = None) -> TestFunction:
    """f1-f3 are sums of named dictionary atoms; f4 is HeaviSine on t_i = i/n."""
    if fid in FUNCTION_ATOMS:
        cons = tuple(FUNCTION_ATOMS[fid])
        idx = [dictionary.index_of(fam, lev, k) for fam, lev, k in cons]
        vec = dictionary.Phi[:, idx].sum(axis=1)
    elif fid == "f4":
        n = dictionary.n
        vec = heavisine(np.arange(1, n + 1) / n)
        cons = ("Analytic",)
    else:
        raise ValueError(f"unknown test function {fid!r}")
    if norm is not None:
        vec = vec * (norm / np.linalg.norm(vec))
    vec.setflags(write=False)
    return TestFunction(id=fid, vector=vec, construction=cons, sparsity_label=SPARSITY[fid])


def true_model(tf: TestFunction, dictionary: Dictionary) -> Model | None:
    if tf.construction == ("Analytic",):
        return None
    return Model.of(dictionary.index_of(fam, lev, k) for fam, lev, k in tf.construction)


def sigma_for_snr(truth, snr: float) -> float:
    if snr <= 0:
        raise ValueError("snr must be positive")
    return float(np.linalg.norm(truth)) / snr


def synthesize_observation(op: ForwardOperator, f, snr: float, seed) -> Observation:
    """``y = A f + sigma eps`` with ``sigma = ||f|| / snr``."""
    truth = f.vector if isinstance(f, TestFunction) else np.asarray(f, dtype=float)
    sigma = sigma_for_snr(truth, snr)
    rng = np.random.default_rng(seed)
    y = op.A @ truth + sigma * rng.standard_normal(op.n)
    meta = {"seed": seed, "snr": snr}
    if isinstance(f, TestFunction):
        meta["truth"] = f.id
    return back_transform(op, y, sigma, meta)


def relative_error(truth, estimate) -> float:
    truth = np.asarray(truth, dtype=float)
    denom = float(truth @ truth)
    if denom == 0:
        raise ZeroTruth("relative error undefined for a zero truth")
    d = truth - np.asarray(estimate, dtype=float)
    return float(d @ d) / denom


def replicate_seed(master_seed: int, stream: int, func_idx: int, snr_idx: int, rep: int) -> int:
    state = np.random.SeedSequence([master_seed, stream, func_idx, snr_idx, rep]).generate_state(2)
    return int(state[0]) | (int(state[1] & 0x7FFFFFFF) << 32)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 128
    operator: str = "exp"
    dictionary: str = "paper"
    functions: tuple = FUNCTION_IDS
    snr_list: tuple = (10.0, 7.0, 5.0)
    replicates: int = 100
    methods: tuple = METHODS
    lambda_grid: tuple = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
    lasso_grid: tuple = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    tuning_replicates: int = 20
    r_max: int = 100_000
    record_tail: int = 50
    init_size_cap: int | None = None
    size_cap: int | None = None
    master_seed: int = 0
    oracle: str = "true"
    f4_norm: float | None = None
    timing: bool = False
    jobs: int = 1

    def __post_init__(self):
        if any(s <= 0 for s in self.snr_list):
            raise ValueError("snr values must be positive")
        if self.replicates < 1 or self.tuning_replicates < 1:
            raise ValueError("replicate counts must be >= 1")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        bad = set(self.functions) - set(FUNCTION_IDS)
        if bad:
            raise ValueError(f"unknown functions {sorted(bad)}")
        if not self.lambda_grid or not self.lasso_grid:
            raise ValueError("lambda grids must be non-empty")
        if self.oracle not in ("true", "exhaustive"):
            raise ValueError("oracle must be 'true' or 'exhaustive'")

    @property
    def model_cap(self) -> int:
        return self.size_cap if self.size_cap is not None else self.n // 2

    def sa_config(self, seed) -> SAConfig:
        return SAConfig(r_max=self.r_max, seed=seed, init_size_cap=self.init_size_cap,
                        record_tail=self.record_tail)


@dataclass
class RunRecord:
    run_id: int
    method: str
    function: str
    snr: float
    lam: float
    rel_error: float
    model_size: int
    seed: int
    wall_time_ms: float = 0.0

    def row(self) -> list:
        return [str(self.run_id), self.method, self.function, _fmt(self.snr), _fmt(self.lam),
                _fmt(self.rel_error), str(self.model_size), str(self.seed), _fmt(self.wall_time_ms)]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class Setup:
    op: ForwardOperator
    dictionary: Dictionary
    dual: DualDictionary

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "Setup":
        if config.operator == "exp":
            op = build_exponential_operator(config.n)
        elif config.operator.startswith("file:"):
            op = load_operator(config.operator[5:])
        else:
            raise ValueError(f"unknown operator spec {config.operator!r}")
        if config.dictionary == "paper":
            d = build_paper_dictionary(config.n)
        elif config.dictionary == "small":
            d = build_small_dictionary(config.n)
        elif config.dictionary.startswith("file:"):
            d = load_dictionary(config.dictionary[5:])
        else:
            raise ValueError(f"unknown dictionary spec {config.dictionary!r}")
        return cls(op=op, dictionary=d, dual=build_dual(d, op))


def _sa_estimate(setup: Setup, obs: Observation, lam: float, config: ExperimentConfig, seed):
    d = setup.dictionary
    pen = PenaltyRule(obs.sigma, lam, d.p)
    trace = run_sa(obs, d, setup.dual, pen, ModelSpace(d.p, config.model_cap), config.sa_config(seed))
    return trace, pen


def fit_method(method: str, setup: Setup, obs: Observation, lam: float, config: ExperimentConfig,
               seed, truth: TestFunction | None = None, trace_cache: dict | None = None):
    """Return (estimate vector, model size) for one method on one observation."""
    d = setup.dictionary
    if method == "lasso":
        fit = fit_lasso(obs.y, d, setup.dual, lam)
        return fit.fitted, support_size(fit)
    if method == "oracle":
        if truth is None or truth.construction == ("Analytic",):
            raise ValueError("oracle needs a dictionary-built truth")
        if config.oracle == "true":
            model = true_model(truth, d)
        else:
            model, _ = oracle_search(setup.op, d, truth.vector, obs.sigma,
                                     ModelSpace(d.p, config.model_cap), setup.dual)
        fit = fit_projection(obs, d, setup.dual, model, PenaltyRule(obs.sigma, 1.0, d.p))
        return fit.fitted, model.size
    if method in ("sa", "qagg"):
        key = (lam, repr(seed))
        if trace_cache is not None and key in trace_cache:
            trace, pen = trace_cache[key]
        else:
            trace, pen = _sa_estimate(setup, obs, lam, config, seed)
            if trace_cache is not None:
                trace_cache[key] = (trace, pen)
        if method == "sa":
            fit = fit_projection(obs, d, setup.dual, trace.best_model, pen)
            return fit.fitted, trace.best_model.size
        cand = build_candidates(obs, d, setup.dual, trace.visited_tail, pen)
        weights = solve_weights(cand, obs.z)
        used = set()
        for k in np.flatnonzero(weights.weights):
            used.update(cand.fits[k].model.indices)
        return aggregate_estimate(cand, weights), len(used)
    raise ValueError(f"unknown method {method!r}")


def _tuning_errors(method: str, setup: Setup, config: ExperimentConfig, tf: TestFunction,
                   snr: float, f_idx: int, s_idx: int) -> tuple[list, np.ndarray]:
    if method == "lasso":
        grid = list(config.lasso_grid)
    else:
        grid = list(config.lambda_grid)
    errors = np.zeros((len(grid), config.tuning_replicates))
    for rep in range(config.tuning_replicates):
        seed = replicate_seed(config.master_seed, TUNE_STREAM, f_idx, s_idx, rep)
        obs = synthesize_observation(setup.op, tf, snr, [seed, 0])
        if method == "lasso":
            lams = [c * obs.sigma for c in grid]
            fits = lasso_path(obs.y, setup.dictionary, setup.dual, lams)
            errors[:, rep] = [relative_error(tf.vector, f.fitted) for f in fits]
        else:
            for g, lam in enumerate(grid):
                est, _ = fit_method("sa", setup, obs, lam, config, [seed, 1])
                errors[g, rep] = relative_error(tf.vector, est)
    return grid, errors


def tune_lambda(method: str, config: ExperimentConfig, function: str | TestFunction, snr: float,
                setup: Setup | None = None) -> tuple[float, list]:
    """Grid value with the smallest mean relative error on the tuning batch.

    Lasso grid values are multiples of sigma. ``qagg`` reuses the SA value.
    Returns ``(lambda, [(grid value, mean error), ...])``; for lasso the
    returned lambda is the sigma multiplier.
    """
    setup = setup or Setup.from_config(config)
    tf = function if isinstance(function, TestFunction) else build_test_function(function, setup.dictionary,
                                                                                 _norm_for(function, config))
    if method == "oracle":
        return math.nan, []
    if method == "qagg":
        method = "sa"
    f_idx = FUNCTION_IDS.index(tf.id)
    s_idx = _snr_index(config, snr)
    grid, errors = _tuning_errors(method, setup, config, tf, snr, f_idx, s_idx)
    means = errors.mean(axis=1)
    best = int(np.argmin(means))
    return grid[best], list(zip(grid, means.tolist()))


def _snr_index(config: ExperimentConfig, snr: float) -> int:
    for i, s in enumerate(config.snr_list):
        if float(s) == float(snr):
            return i
    return len(config.snr_list)


def _norm_for(fid: str, config: ExperimentConfig):
    return config.f4_norm if fid == "f4" else None


def _group_records(setup: Setup, config: ExperimentConfig, fid: str, snr: float,
                   lambdas: dict, reps: Sequence[int]) -> list:
    tf = build_test_function(fid, setup.dictionary, _norm_for(fid, config))
    f_idx = FUNCTION_IDS.index(fid)
    s_idx = _snr_index(config, snr)
    methods = [m for m in config.methods if not (m == "oracle" and fid == "f4")]
    out = []
    for rep in reps:
        seed = replicate_seed(config.master_seed, EVAL_STREAM, f_idx, s_idx, rep)
        obs = synthesize_observation(setup.op, tf, snr, [seed, 0])
        cache: dict = {}
        for method in methods:
            lam_setting = lambdas.get(method, math.nan)
            lam = lam_setting * obs.sigma if method == "lasso" else lam_setting
            t0 = time.perf_counter()
            try:
                est, size = fit_method(method, setup, obs, lam, config, [seed, 1], tf, cache)
                err = relative_error(tf.vector, est)
            except (SparseInvError, np.linalg.LinAlgError, ValueError) as exc:
                log.warning("run failed: %s %s snr=%s rep=%d: %s", method, fid, snr, rep, exc)
                err, size = math.nan, -1
            ms = (time.perf_counter() - t0) * 1e3 if config.timing else 0.0
            out.append(RunRecord(rep, method, fid, float(snr), float(lam), err, int(size), seed, ms))
    return out


_WORKER: dict = {}


def _worker_init(config: ExperimentConfig):
    _WORKER["setup"] = Setup.from_config(config)
    _WORKER["config"] = config


def _worker_task(args):
    fid, snr, lambdas, reps = args
    return _group_records(_WORKER["setup"], _WORKER["config"], fid, snr, lambdas, reps)


def run_experiment(config: ExperimentConfig, setup: Setup | None = None) -> list:
    """All (function, snr, method, replicate) runs, ordered deterministically."""
    setup = setup or Setup.from_config(config)
    tasks = []
    for fid in config.functions:
        for snr in config.snr_list:
            lambdas = {}
            for method in config.methods:
                if method in ("sa", "lasso"):
                    lambdas[method], _ = tune_lambda(method, config, fid, snr, setup)
            if "qagg" in config.methods:
                lambdas["qagg"] = lambdas["sa"] if "sa" in lambdas else tune_lambda("sa", config, fid, snr, setup)[0]
            log.info("%s snr=%s tuned lambdas %s", fid, snr, lambdas)
            reps = list(range(config.replicates))
            if config.jobs > 1:
                step = math.ceil(len(reps) / config.jobs)
                tasks.extend((fid, snr, lambdas, reps[i:i + step]) for i in range(0, len(reps), step))
            else:
                tasks.append((fid, snr, lambdas, reps))
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs, initializer=_worker_init, initargs=(config,)) as pool:
            chunks = list(pool.map(_worker_task, tasks))
    else:
        chunks = [_group_records(setup, config, *t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    f_order = {f: i for i, f in enumerate(config.functions)}
    s_order = {float(s): i for i, s in enumerate(config.snr_list)}
    m_order = {m: i for i, m in enumerate(config.methods)}
    records.sort(key=lambda r: (f_order[r.function], s_order[r.snr], m_order[r.method], r.run_id))
    return records


def summarize(records: Sequence[RunRecord]) -> list:
    """Quantiles of rel_error and median model size per (function, snr, method)."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.function, r.snr, r.method), []).append(r)
    out = []
    for (fid, snr, method), rs in groups.items():
        err = np.array([r.rel_error for r in rs if not math.isnan(r.rel_error)])
        sizes = np.array([r.model_size for r in rs if r.model_size >= 0])
        q = np.quantile(err, [0.25, 0.5, 0.75]) if err.size else [math.nan] * 3
        out.append({
            "function": fid, "snr": snr, "method": method, "count": len(rs),
            "failures": len(rs) - err.size, "lambda": rs[0].lam if method != "lasso" else math.nan,
            "q25": q[0], "median": q[1], "q75": q[2],
            "mean": float(err.mean()) if err.size else math.nan,
            "median_size": float(np.median(sizes)) if sizes.size else math.nan,
        })
    return out


def records_to_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(r.row())
    return buf.getvalue()


def write_csv(path, records: Sequence[RunRecord]) -> None:
    Path(path).write_text(records_to_csv(records))


def parse_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    out = []
    for row in reader:
        run_id, method, fid, snr, lam, err, size, seed, ms = row
        out.append(RunRecord(int(run_id), method, fid, float(snr), float(lam), float(err), int(size),
                             int(seed), float(ms)))
    return out


def read_csv(path) -> list:
    return parse_csv(Path(path).read_text())


# -- flat key = value configuration files ---------------------------------

_TUPLE_FIELDS = {"functions": str, "snr_list": float, "methods": str, "lambda_grid": float, "lasso_grid": float}
_INT_FIELDS = {"n", "replicates", "tuning_replicates", "r_max", "record_tail", "master_seed", "jobs"}
_OPT_INT_FIELDS = {"init_size_cap", "size_cap"}
_OPT_FLOAT_FIELDS = {"f4_norm"}
_BOOL_FIELDS = {"timing"}
CONFIG_KEYS = tuple(f.name for f in fields(ExperimentConfig))


def coerce_config_value(key: str, raw: str):
    if key not in CONFIG_KEYS:
        raise KeyError(f"unknown config key {key!r}")
    raw = raw.strip()
    if key in _TUPLE_FIELDS:
        kind = _TUPLE_FIELDS[key]
        return tuple(kind(tok) for tok in raw.replace(",", " ").split())
    if key in _INT_FIELDS:
        return int(raw)
    if key in _OPT_INT_FIELDS:
        return None if raw.lower() in ("", "none", "default") else int(raw)
    if key in _OPT_FLOAT_FIELDS:
        return None if raw.lower() in ("", "none", "default") else float(raw)
    if key in _BOOL_FIELDS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    return raw


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = coerce_config_value(key, raw)
    return values


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update(overrides or {})
    return replace(ExperimentConfig(), **values)


def config_to_text(config: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = " ".join(_fmt(x) if isinstance(x, float) else str(x) for x in v)
        elif v is None:
            v = "default"
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
