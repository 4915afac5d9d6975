"""Simulated-annealing search for the penalized model-selection criterion.

The chain toggles one uniformly drawn atom per step and accepts with the
Metropolis rule at temperature ``T(r) = 1 / (1 + ln r)``.

Random streams: ``SeedSequence(seed)`` is spawned into three children used,
in order, for (0) the initial model, (1) the atom proposals, and (2) the
acceptance uniforms. Proposals and uniforms are drawn in fixed-size blocks,
so a chain with a larger ``r_max`` extends the shorter chain exactly.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .dictionary import Dictionary, DualDictionary
from .estimator import RANK_RTOL, Model, ModelSpace, PenaltyRule
from .operator import Observation

_BLOCK = 4096


@dataclass(frozen=True)
class SAConfig:
    r_max: int = 100_000
    seed: int = 0
    init_size_cap: int | None = None  # default floor(n / ln p)
    cooling: str = "log"
    record_tail: int = 50

    def __post_init__(self):
        if self.r_max < 1:
            raise ValueError("r_max must be >= 1")
        if self.init_size_cap is not None and self.init_size_cap < 1:
            raise ValueError("init_size_cap must be >= 1")
        if self.record_tail < 1:
            raise ValueError("record_tail must be >= 1")
        if self.cooling != "log":
            raise ValueError(f"unknown cooling schedule {self.cooling!r}")


@dataclass
class SATrace:
    best_model: Model
    best_objective: float
    visited_tail: list
    acceptance_count: int
    objective_history_summary: tuple  # (min, final, iterations)
    final_model: Model
    rejected_cap: int = 0
    rejected_rank: int = 0
    initial_model: Model = field(default_factory=Model)
    tail_objectives: list = field(default_factory=list)


def temperature(r: int) -> float:
    """Log cooling schedule; ``T(1) = 1``."""
    if r < 1:
        raise ValueError("steps are counted from 1")
    return 1.0 / (1.0 + math.log(r))


def acceptance_probability(obj_new: float, obj_cur: float, temp: float) -> float:
    if temp <= 0:
        raise ValueError("temperature must be positive")
    delta = obj_new - obj_cur
    if delta <= 0:
        return 1.0
    return math.exp(-delta / temp)


def initial_proposal_distribution(dual: DualDictionary, y) -> np.ndarray:
    """Starting-model weights ``p(j) ~ exp(<psi_j, y>^2 - c ||psi_j||^2)``.

    ``c`` is the ratio of the summed squared empirical coefficients to the
    summed atom variances.
    """
    s = (dual.Psi.T @ np.asarray(y, dtype=float)) ** 2
    w = dual.atom_variances
    c = s.sum() / w.sum()
    e = s - c * w
    e -= e.max()
    prob = np.exp(e)
    return prob / prob.sum()


class CriterionEvaluator:
    """Memoized ``pi(M) = -||H_M z||^2 + Pen(M)`` for one observation.

    Keys are sorted index tuples; ``None`` marks a rank-deficient model.
    """

    def __init__(self, obs: Observation, dictionary: Dictionary, dual: DualDictionary,
                 pen: PenaltyRule):
        self.G = dictionary.gram()
        self.b = dictionary.Phi.T @ obs.z
        self.w = np.asarray(dual.atom_variances)
        self.coef = pen.coefficient
        self.memo: dict = {(): 0.0}

    def __call__(self, key: tuple):
        try:
            return self.memo[key]
        except KeyError:
            pass
        idx = list(key)
        Gm = self.G[np.ix_(idx, idx)]
        try:
            L = np.linalg.cholesky(Gm)
        except np.linalg.LinAlgError:
            L = None
        if L is None or np.diag(L).min() ** 2 < RANK_RTOL * np.diag(Gm).max():
            value = None
        else:
            u = solve_triangular(L, self.b[idx], lower=True, check_finite=False)
            value = float(-(u @ u) + self.coef * self.w[idx].sum())
        self.memo[key] = value
        return value


def _draw_initial(rng: np.random.Generator, probs: np.ndarray, m: int,
                  evaluate: CriterionEvaluator) -> tuple:
    m = min(m, int(np.count_nonzero(probs)))
    for _ in range(100):
        key = tuple(sorted(int(j) for j in rng.choice(probs.size, size=m, replace=False, p=probs)))
        if evaluate(key) is not None:
            return key
    return ()


def run_sa(obs: Observation, dictionary: Dictionary, dual: DualDictionary, pen: PenaltyRule,
           space: ModelSpace, cfg: SAConfig) -> SATrace:
    p, n = dictionary.p, dictionary.n
    evaluate = CriterionEvaluator(obs, dictionary, dual, pen)
    init_rng, prop_rng, acc_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(3)
    )

    cap = cfg.init_size_cap if cfg.init_size_cap is not None else max(1, math.floor(n / math.log(p)))
    cap = min(cap, space.size_cap, p)
    if cap >= 1:
        m = int(init_rng.integers(1, cap + 1))
        current = _draw_initial(init_rng, initial_proposal_distribution(dual, obs.y), m, evaluate)
    else:
        current = ()
    frob_cap = None if space.gamma is None else space.gamma**2 * n
    w = evaluate.w

    initial = current
    cur_obj = evaluate(current)
    best, best_obj = current, cur_obj
    members = set(current)
    recent = OrderedDict({current: None})
    keep = max(4 * cfg.record_tail, 64)
    accepted = rejected_cap = rejected_rank = 0

    r = 1
    while r <= cfg.r_max:
        block = min(_BLOCK, cfg.r_max - r + 1)
        js = prop_rng.integers(0, p, size=_BLOCK)[:block]
        us = acc_rng.random(_BLOCK)[:block]
        for j, u in zip(js.tolist(), us.tolist()):
            temp = 1.0 / (1.0 + math.log(r))
            r += 1
            if j in members:
                cand = tuple(i for i in current if i != j)
            else:
                if len(current) >= space.size_cap:
                    rejected_cap += 1
                    continue
                cand = tuple(sorted(current + (j,)))
            if frob_cap is not None and w[list(cand)].sum() > frob_cap:
                rejected_cap += 1
                continue
            obj = evaluate(cand)
            if obj is None:
                rejected_rank += 1
                continue
            delta = obj - cur_obj
            if delta > 0 and u >= math.exp(-delta / temp):
                continue
            current, cur_obj = cand, obj
            if j in members:
                members.discard(j)
            else:
                members.add(j)
            accepted += 1
            recent[current] = None
            recent.move_to_end(current)
            if len(recent) > keep:
                recent.popitem(last=False)
            if obj < best_obj or (obj == best_obj and (len(cand), cand) < (len(best), best)):
                best, best_obj = cand, obj

    tail_keys = list(reversed(list(recent)[-cfg.record_tail:]))
    tail = [Model(k) for k in tail_keys]
    return SATrace(
        best_model=Model(best),
        best_objective=best_obj,
        visited_tail=tail,
        acceptance_count=accepted,
        objective_history_summary=(best_obj, cur_obj, cfg.r_max),
        final_model=Model(current),
        rejected_cap=rejected_cap,
        rejected_rank=rejected_rank,
        initial_model=Model(initial),
        tail_objectives=[evaluate.memo[k] for k in tail_keys],
    )
