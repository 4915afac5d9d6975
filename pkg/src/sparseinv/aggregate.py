"""Q-aggregation of projection estimators over a finite candidate list.

With ``alpha = 1/2`` the weights minimize, over the probability simplex,

    Q(theta) = sum_k theta_k g_k + ||z - F theta||^2,
    g_k = ||z - f_hat_k||^2 + 2 Pen(M_k),

where ``F`` holds the candidate fits as columns. ``Q`` is twice the general
criterion ``alpha * sum theta ||z - f_hat||^2 + (1 - alpha) ||z - F theta||^2
+ sum theta Pen`` evaluated at ``alpha = 1/2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dictionary import Dictionary, DualDictionary
from .errors import DimensionMismatch, RankDeficientModel
from .estimator import Model, PenaltyRule, ProjectionFit, argmin_tiebreak, fit_projection
from .operator import Observation

WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class CandidateSet:
    fits: tuple
    fitted_matrix: np.ndarray
    linear_costs: np.ndarray

    @property
    def K(self) -> int:
        return len(self.fits)

    @property
    def models(self) -> list:
        return [f.model for f in self.fits]

    @classmethod
    def from_fits(cls, fits: Sequence[ProjectionFit]) -> "CandidateSet":
        if not fits:
            raise ValueError("candidate set must be non-empty")
        models = [f.model for f in fits]
        if len(set(models)) != len(models):
            raise ValueError("candidate models must be pairwise distinct")
        F = np.column_stack([f.fitted for f in fits])
        g = np.array([f.empirical_risk + 2.0 * f.penalty for f in fits])
        return cls(fits=tuple(fits), fitted_matrix=F, linear_costs=g)


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    weights: np.ndarray
    objective_value: float
    gap: float
    iterations: int = 0
    converged: bool = True


def build_candidates(obs: Observation, dictionary: Dictionary, dual: DualDictionary,
                     models: Sequence[Model], pen: PenaltyRule) -> CandidateSet:
    """Fit each distinct model once (first occurrence kept); rank-deficient models are skipped."""
    seen, fits = set(), []
    for m in models:
        if m in seen:
            continue
        seen.add(m)
        try:
            fits.append(fit_projection(obs, dictionary, dual, m, pen))
        except RankDeficientModel:
            continue
    return CandidateSet.from_fits(fits)


def _check(cand: CandidateSet, z: np.ndarray, weights: np.ndarray | None = None) -> None:
    if z.shape != (cand.fitted_matrix.shape[0],):
        raise DimensionMismatch("z does not match candidate fits")
    if weights is not None and weights.shape != (cand.K,):
        raise DimensionMismatch(f"expected {cand.K} weights, got {weights.shape}")


def q_objective(cand: CandidateSet, z, weights) -> float:
    z = np.asarray(z, dtype=float)
    theta = np.asarray(weights, dtype=float)
    _check(cand, z, theta)
    r = z - cand.fitted_matrix @ theta
    return float(theta @ cand.linear_costs + r @ r)


def q_criterion(cand: CandidateSet, z, weights, alpha: float) -> float:
    """General mixed criterion; ``2 * q_criterion(alpha=0.5) == q_objective``."""
    z = np.asarray(z, dtype=float)
    theta = np.asarray(weights, dtype=float)
    _check(cand, z, theta)
    risks = np.array([f.empirical_risk for f in cand.fits])
    pens = np.array([f.penalty for f in cand.fits])
    r = z - cand.fitted_matrix @ theta
    return float(alpha * theta @ risks + (1 - alpha) * (r @ r) + theta @ pens)


def solve_weights(cand: CandidateSet, z, tol: float = 1e-8, max_iter: int = 10_000) -> SimplexWeights:
    """Minimize ``q_objective`` over the simplex (see ``solve_simplex_qp``)."""
    z = np.asarray(z, dtype=float)
    _check(cand, z)
    return solve_simplex_qp(cand.fitted_matrix, cand.linear_costs, z, tol=tol, max_iter=max_iter)


def solve_simplex_qp(F: np.ndarray, g: np.ndarray, z: np.ndarray, tol: float = 1e-8,
                     max_iter: int = 10_000) -> SimplexWeights:
    """Minimize ``theta @ g + ||z - F theta||^2`` over the probability simplex.

    Fully-corrective conditional gradient: each outer step adds the vertex
    returned by the linear minimization oracle to the active set, then
    re-optimizes over the hull of the active set with pairwise steps and
    exact line search. Stops once the conditional-gradient gap is at most
    ``tol`` or after ``max_iter`` total steps.
    """
    K = F.shape[1]
    Q = F.T @ F
    lin = g - 2.0 * (F.T @ z)
    const = float(z @ z)

    def value(t):
        return float(t @ lin + t @ Q @ t + const)

    vertex_vals = lin + np.diag(Q) + const
    theta = np.zeros(K)
    theta[int(np.argmin(vertex_vals))] = 1.0
    if K == 1:
        return SimplexWeights(weights=theta, objective_value=value(theta), gap=0.0)

    Qt = Q @ theta
    steps = 0
    gap = np.inf
    while True:
        grad = lin + 2.0 * Qt
        s = int(np.argmin(grad))
        gap = float(theta @ grad - grad[s])
        if gap <= tol or steps >= max_iter:
            break
        # corrective phase over the active set plus the new vertex
        active = np.flatnonzero(theta > 0)
        if s not in active:
            active = np.append(active, s)
        while steps < max_iter:
            steps += 1
            ga = grad[active]
            up = active[int(np.argmin(ga))]
            held = active[theta[active] > 0]
            down = held[int(np.argmax(grad[held]))]
            slope = grad[up] - grad[down]
            inner_gap = float(theta[active] @ ga - ga.min())
            if up == down or -slope <= 0.5 * tol or inner_gap <= 0.5 * tol:
                break
            curv = 2.0 * (Q[up, up] - 2.0 * Q[up, down] + Q[down, down])
            t = theta[down] if curv <= 0 else min(theta[down], -slope / curv)
            theta[up] += t
            theta[down] -= t
            if theta[down] <= 0:
                theta[down] = 0.0
            Qt += t * (Q[:, up] - Q[:, down])
            grad = lin + 2.0 * Qt
        Qt = Q @ theta  # refresh against drift

    converged = gap <= tol
    theta[theta < WEIGHT_FLOOR] = 0.0
    theta /= theta.sum()
    return SimplexWeights(weights=theta, objective_value=value(theta), gap=max(gap, 0.0),
                          iterations=steps, converged=converged)


def aggregate_estimate(cand: CandidateSet, weights) -> np.ndarray:
    theta = weights.weights if isinstance(weights, SimplexWeights) else np.asarray(weights, dtype=float)
    if theta.shape != (cand.K,):
        raise DimensionMismatch(f"expected {cand.K} weights, got {theta.shape}")
    return cand.fitted_matrix @ theta


def model_selection_as_aggregation(cand: CandidateSet, z) -> SimplexWeights:
    """The ``alpha = 1`` instance: all weight on the candidate minimizing
    ``||z - f_hat_M||^2 + Pen(M)``."""
    z = np.asarray(z, dtype=float)
    _check(cand, z)
    crit = np.array([f.empirical_risk + f.penalty for f in cand.fits])
    order = sorted(range(cand.K), key=lambda k: cand.fits[k].model.sort_key())
    k = order[argmin_tiebreak(crit[order])]
    theta = np.zeros(cand.K)
    theta[k] = 1.0
    return SimplexWeights(weights=theta, objective_value=q_objective(cand, z, theta), gap=0.0)
