"""Variance-weighted Lasso over the dictionary, by cyclic coordinate descent.

Minimizes

    L(theta) = ||Phi theta||^2 - 2 theta^T b + lam * sum_j w_j |theta_j|,

with ``b_j = <y, psi_j>`` and ``w_j = ||psi_j||^2``. Atoms have unit norm, so
each coordinate update is a soft threshold at ``lam * w_j / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import Dictionary, DualDictionary


@dataclass(frozen=True, eq=False)
class LassoFit:
    coefficients: np.ndarray
    support: tuple
    lam: float
    fitted: np.ndarray
    iterations: int
    converged: bool


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(theta, G, b, w, lam) -> float:
    return float(theta @ G @ theta - 2.0 * theta @ b + lam * np.sum(w * np.abs(theta)))


def _sweep(theta, c, G, b, thr, coords) -> float:
    biggest = 0.0
    for j in coords:
        old = theta[j]
        rho = b[j] - c[j] + old  # G_jj == 1
        if rho > thr[j]:
            new = rho - thr[j]
        elif rho < -thr[j]:
            new = rho + thr[j]
        else:
            new = 0.0
        if new != old:
            delta = new - old
            theta[j] = new
            c += delta * G[j]
            biggest = max(biggest, abs(delta))
    return biggest


def fit_lasso(y, dictionary: Dictionary, dual: DualDictionary, lam: float, tol: float = 1e-8,
              max_sweeps: int = 10_000, warm_start=None, G=None, on_sweep=None) -> LassoFit:
    """Coordinate descent with covariance updates and active-set passes.

    Full sweeps alternate with passes over the current support until a full
    sweep moves no coordinate by more than ``tol``. ``on_sweep`` is called
    with the iterate after every pass (used to check monotonicity).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    Phi = dictionary.Phi
    G = Phi.T @ Phi if G is None else G
    b = dual.Psi.T @ np.asarray(y, dtype=float)
    thr = 0.5 * lam * np.asarray(dual.atom_variances)
    p = Phi.shape[1]
    theta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    c = G @ theta
    everything = range(p)
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        change = _sweep(theta, c, G, b, thr, everything)
        sweeps += 1
        if on_sweep is not None:
            on_sweep(theta)
        if change <= tol:
            converged = True
            break
        active = np.flatnonzero(theta).tolist()
        while sweeps < max_sweeps:
            change = _sweep(theta, c, G, b, thr, active)
            sweeps += 1
            if on_sweep is not None:
                on_sweep(theta)
            if change <= tol:
                break
    support = tuple(int(j) for j in np.flatnonzero(theta))
    return LassoFit(coefficients=theta, support=support, lam=float(lam), fitted=Phi @ theta,
                    iterations=sweeps, converged=converged)


def support_size(fit: LassoFit) -> int:
    return int(np.count_nonzero(fit.coefficients))


def kkt_violation(fit: LassoFit, dictionary: Dictionary, dual: DualDictionary, y) -> float:
    """Largest violation of the subgradient optimality conditions."""
    Phi = dictionary.Phi
    b = dual.Psi.T @ np.asarray(y, dtype=float)
    w = np.asarray(dual.atom_variances)
    theta = fit.coefficients
    grad = 2.0 * (Phi.T @ (Phi @ theta)) - 2.0 * b
    on = theta != 0
    viol_on = np.abs(grad[on] + fit.lam * w[on] * np.sign(theta[on]))
    viol_off = np.maximum(np.abs(grad[~on]) - fit.lam * w[~on], 0.0)
    return float(max(viol_on.max(initial=0.0), viol_off.max(initial=0.0)))


def lambda_max(y, dual: DualDictionary) -> float:
    """Smallest lambda for which the zero vector is optimal."""
    b = dual.Psi.T @ np.asarray(y, dtype=float)
    return float(np.max(2.0 * np.abs(b) / np.asarray(dual.atom_variances)))


def lasso_path(y, dictionary: Dictionary, dual: DualDictionary, lambdas, **kw) -> list:
    """Fits along ``lambdas`` (processed in decreasing order, warm-started)."""
    G = dictionary.Phi.T @ dictionary.Phi
    fits = {}
    theta = None
    for lam in sorted(set(float(l) for l in lambdas), reverse=True):
        fit = fit_lasso(y, dictionary, dual, lam, warm_start=theta, G=G, **kw)
        theta = fit.coefficients
        fits[lam] = fit
    return [fits[float(l)] for l in lambdas]
