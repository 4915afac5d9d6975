"""Small-scale invariant suite: identities, tail bounds and oracle inequalities
checked numerically, plus brute-force cross-checks of the three solvers.

Every check takes a seed (or generator) and returns a ``CheckResult``;
failures are reported, never raised. ``invariant_suite`` runs them all with
independent child streams of one master seed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .aggregate import CandidateSet, solve_simplex_qp, solve_weights
from .dictionary import Family, build_dual, build_small_dictionary, dictionary_from_matrix, estimate_nu_sq
from .estimator import (
    Model,
    ModelBank,
    ModelSpace,
    PenaltyRule,
    argmin_tiebreak,
    enumerate_models,
    exact_risk,
    fit_projection,
    lambda_from_theory,
)
from .lasso import fit_lasso, kkt_violation, lambda_max, soft_threshold
from .operator import back_transform, build_exponential_operator, build_from_matrix
from .search import SAConfig, run_sa


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: measured={self.measured:.6g} threshold={self.threshold:.6g}"
                f" ({self.seconds:.1f}s) {self.detail}".rstrip())


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _setup(n: int):
    op = build_exponential_operator(n)
    d = build_small_dictionary(n)
    return op, d, build_dual(d, op)


def _random_model(rng, p: int, lo: int, hi: int) -> Model:
    k = int(rng.integers(lo, hi + 1))
    return Model.of(rng.choice(p, size=k, replace=False).tolist())


def _binomial_bound(bound: float, N: int) -> float:
    return bound + 3.0 * math.sqrt(bound * (1.0 - bound) / N)


def _batch_z(op, Y: np.ndarray) -> np.ndarray:
    """Back-transform every row of ``Y``."""
    return solve_triangular(op.R, op.Q.T @ Y.T).T


@_timed
def check_identities(seed=0, instances: int = 100, n: int = 32, K: int = 20) -> CheckResult:
    """Weighted-average decomposition of squared losses and the two equivalent forms of the selection criterion."""
    rng = _rng(seed)
    op, d, dual = _setup(n)
    worst = 0.0
    same_argmin = True
    for _ in range(instances):
        truth = d.Phi[:, rng.choice(d.p, size=3, replace=False)].sum(axis=1)
        sigma = float(rng.uniform(0.05, 0.5))
        obs = back_transform(op, op.A @ truth + sigma * rng.standard_normal(n), sigma)
        pen = PenaltyRule(sigma, float(rng.uniform(0.1, 4.0)), d.p)
        models: set = set()
        while len(models) < K:
            models.add(_random_model(rng, d.p, 0, 6))
        fits = [fit_projection(obs, d, dual, m, pen) for m in sorted(models)]
        F = np.column_stack([f.fitted for f in fits])
        # weighted-average decomposition for an arbitrary target and simplex weights
        f_tilde = rng.standard_normal(n)
        theta = rng.dirichlet(np.ones(K))
        f_theta = F @ theta
        lhs = theta @ ((f_tilde[:, None] - F) ** 2).sum(axis=0)
        rhs = ((f_tilde - f_theta) ** 2).sum() + theta @ ((f_theta[:, None] - F) ** 2).sum(axis=0)
        scale = max(1.0, abs(lhs))
        worst = max(worst, abs(lhs - rhs) / scale)
        # -||f_M||^2 + Pen == ||z - f_M||^2 + Pen - ||z||^2
        zz = float(obs.z @ obs.z)
        a = np.array([f.objective for f in fits])
        b = np.array([f.empirical_risk + f.penalty for f in fits])
        worst = max(worst, float(np.max(np.abs(a - (b - zz)))) / max(1.0, zz))
        same_argmin &= argmin_tiebreak(a) == argmin_tiebreak(b)
    return CheckResult("identities (mixture decomposition, two-form criterion)", worst <= 1e-10 and same_argmin,
                       worst, 1e-10, f"argmins agree: {same_argmin}")


@_timed
def check_subadditivity(seed=0, pairs: int = 100, n: int = 32) -> CheckResult:
    """Frobenius and spectral subadditivity of the dual submatrices."""
    rng = _rng(seed)
    op, d, dual = _setup(n)
    Psi = dual.Psi

    def lam_max(m):
        S = Psi[:, list(m.indices)]
        return float(np.linalg.eigvalsh(S.T @ S)[-1])

    def frob(m):
        return float((Psi[:, list(m.indices)] ** 2).sum())

    slack = np.inf
    for _ in range(pairs):
        m1, m2 = _random_model(rng, d.p, 1, 8), _random_model(rng, d.p, 1, 8)
        u = m1.union(m2)
        slack = min(slack, frob(m1) + frob(m2) - frob(u))
        slack = min(slack, 2.0 * (lam_max(m1) + lam_max(m2)) - lam_max(u))
    return CheckResult("subadditivity (spectral and Frobenius)", slack >= -1e-10, slack, -1e-10, "min slack")


@_timed
def check_risk_decomposition(seed=0, draws: int = 10_000, n: int = 16, size: int = 3) -> CheckResult:
    """Monte Carlo mean of ||f_hat_M - f||^2 against bias^2 + variance."""
    rng = _rng(seed)
    op, d, dual = _setup(n)
    model = _random_model(rng, d.p, size, size)
    outside = int(rng.choice([j for j in range(d.p) if j not in model]))
    truth = d.Phi[:, list(model.indices)].sum(axis=1) + 0.3 * d.Phi[:, outside]
    sigma = 0.2 * float(np.linalg.norm(truth))
    report = exact_risk(op, d, truth, sigma, model)
    Y = op.A @ truth + sigma * rng.standard_normal((draws, n))
    Z = _batch_z(op, Y)
    Phi_M = d.Phi[:, list(model.indices)]
    coef = np.linalg.solve(Phi_M.T @ Phi_M, Phi_M.T @ Z.T)
    losses = ((Phi_M @ coef - truth[:, None]) ** 2).sum(axis=0)
    se = losses.std(ddof=1) / math.sqrt(draws)
    dev = abs(losses.mean() - report.total)
    return CheckResult("risk decomposition", dev <= 3 * se, dev / se, 3.0,
                       f"MC mean {losses.mean():.6g} vs bias^2 {report.bias_sq:.4g} + variance {report.variance:.4g}"
                       " (deviation in SE units)")


@_timed
def check_noise_tail(seed=0, draws: int = 10_000, n: int = 16, size_cap: int = 2) -> CheckResult:
    """Frequency of sup_M {||Psi_M^T E||^2 - 2 sigma^2 ||Psi_M||_F^2 (ln p + x)} > 0 at x = ln p."""
    rng = _rng(seed)
    op, d, dual = _setup(n)
    p, sigma = d.p, 1.0
    x = math.log(p)
    models = list(enumerate_models(p, size_cap))
    indicator = np.zeros((p, len(models)))
    for k, m in enumerate(models):
        indicator[list(m.indices), k] = 1.0
    E = sigma * rng.standard_normal((draws, n))
    S = (E @ dual.Psi) ** 2  # (draws, p)
    excess = S @ indicator - 2 * sigma**2 * (math.log(p) + x) * (dual.atom_variances @ indicator)
    freq = float(np.mean(excess.max(axis=1) > 0))
    bound = math.sqrt(2 / math.pi) * math.exp(-x)
    thr = _binomial_bound(bound, draws)
    return CheckResult("noise tail bound", freq <= thr, freq, thr, f"bound {bound:.4g}")


def _oracle_setup(n: int, size_cap: int, delta: float):
    op, d, dual = _setup(n)
    est = estimate_nu_sq(d, 2 * size_cap)
    models = list(enumerate_models(d.p, size_cap))
    bank = ModelBank(d, models, dual)
    truth = (d.Phi[:, d.index_of(Family.DAUBECHIES_SCALING, 1, 0)]
             + d.Phi[:, d.index_of(Family.HAAR_SCALING, 2, 3)])
    return op, d, dual, est, models, bank, truth


def _replicate_data(op, d, truth, snr, rng, reps):
    sigma = float(np.linalg.norm(truth)) / snr
    Y = op.A @ truth + sigma * rng.standard_normal((reps, op.n))
    return sigma, _batch_z(op, Y)


@_timed
def check_selection_oracle(seed=0, reps: int = 1000, n: int = 16, delta: float = 1.0, a: float = 0.5,
                           size_cap: int = 2, snr: float = 5.0) -> CheckResult:
    """High-probability oracle inequality for the exhaustively selected model."""
    rng = _rng(seed)
    op, d, dual, est, models, bank, truth = _oracle_setup(n, size_cap, delta)
    lam = lambda_from_theory(a, delta, est.nu_sq_lower)
    sigma, Z = _replicate_data(op, d, truth, snr, rng, reps)
    pen = PenaltyRule(sigma, lam, d.p)
    pens = pen(bank.frobenius_sq)
    bias = np.maximum(truth @ truth - bank.fitted_sq_norms(d.Phi.T @ truth), 0.0)
    const = (a * a + a + 4) / (2 * (1 + a))
    rhs = (1 + a) / (1 - a) * np.nanmin(np.where(bank.valid, bias + const * pens, np.inf))
    crit = -bank.fitted_sq_norms(Z @ d.Phi) + pens  # (reps, K), models in tie-break order
    crit[:, ~bank.valid] = np.inf
    violations = 0
    for r in range(reps):
        m = models[argmin_tiebreak(crit[r])]
        fit = fit_projection(back_transform(op, op.A @ Z[r], sigma), d, dual, m, pen)
        violations += float(((fit.fitted - truth) ** 2).sum()) > rhs
    freq = violations / reps
    bound = math.sqrt(2 / math.pi) * d.p ** (-delta)
    thr = _binomial_bound(bound, reps)
    return CheckResult("selection oracle inequality", freq <= thr, freq, thr,
                       f"nu^2_{est.r}={est.nu_sq_lower:.4g}, lambda={lam:.4g}")


@_timed
def check_aggregation_oracle(seed=0, reps: int = 1000, n: int = 16, delta: float = 1.0,
                             size_cap: int = 2, snr: float = 5.0) -> CheckResult:
    """Sharp oracle inequality for Q-aggregation over the full model space."""
    rng = _rng(seed)
    op, d, dual, est, models, bank, truth = _oracle_setup(n, size_cap, delta)
    lam = (delta + 1) / est.nu_sq_lower
    sigma, Z = _replicate_data(op, d, truth, snr, rng, reps)
    keep = bank.valid
    pen = PenaltyRule(sigma, lam, d.p)
    frob = bank.frobenius_sq[keep]
    bias = np.maximum(truth @ truth - bank.fitted_sq_norms(d.Phi.T @ truth), 0.0)[keep]
    rhs = float(np.min(bias + 10.0 * sigma**2 * (delta + 1) * frob * math.log(d.p) / est.nu_sq_lower))
    violations, unconverged = 0, 0
    for r in range(reps):
        z = Z[r]
        F = bank.coefficients_matrix(z)[:, keep]
        g = ((z[:, None] - F) ** 2).sum(axis=0) + 2.0 * pen(frob)
        w = solve_simplex_qp(F, g, z)
        unconverged += not w.converged
        violations += float(((F @ w.weights - truth) ** 2).sum()) > rhs
    freq = violations / reps
    bound = math.sqrt(2 / math.pi) * d.p ** (-delta)
    thr = _binomial_bound(bound, reps)
    return CheckResult("aggregation oracle inequality", freq <= thr and unconverged == 0, freq, thr,
                       f"K={int(keep.sum())}, unconverged={unconverged}")


@_timed
def check_annealing(seed=0, runs: int = 100, n: int = 8, size_cap: int = 3, r_max: int = 20_000,
                    snr: float = 20.0, lam: float = 1.0) -> CheckResult:
    """Annealing finds the exhaustive minimizer of the selection criterion."""
    rng = _rng(seed)
    op, d, dual = _setup(n)
    models = list(enumerate_models(d.p, size_cap))
    bank = ModelBank(d, models, dual)
    space = ModelSpace(d.p, size_cap)
    hits = 0
    for run in range(runs):
        truth = d.Phi[:, int(rng.integers(d.p))]
        sigma = float(np.linalg.norm(truth)) / snr
        obs = back_transform(op, op.A @ truth + sigma * rng.standard_normal(n), sigma)
        pen = PenaltyRule(sigma, lam, d.p)
        crit = -bank.fitted_sq_norms(d.Phi.T @ obs.z) + pen(bank.frobenius_sq)
        crit[~bank.valid] = np.inf
        target = models[argmin_tiebreak(crit)]
        trace = run_sa(obs, d, dual, pen, space, SAConfig(r_max=r_max, seed=int(rng.integers(2**32))))
        hits += trace.best_model == target
    return CheckResult("annealing finds exhaustive minimizer", hits >= 0.9 * runs, hits, 0.9 * runs,
                       f"p={d.p}, {len(models)} models")


@_timed
def check_simplex_solver(seed=0, instances: int = 20, n: int = 16, step: float = 1e-3) -> CheckResult:
    """Conditional-gradient weights against a dense grid on the 2-simplex."""
    rng = _rng(seed)
    op, d, dual = _setup(n)
    m = int(round(1 / step))
    i, j = np.triu_indices(m + 1)
    grid = np.column_stack([i, j - i, m - j]) / m  # all points with spacing `step`
    worst = 0.0
    for _ in range(instances):
        truth = d.Phi[:, rng.choice(d.p, size=3, replace=False)].sum(axis=1)
        sigma = 0.2 * float(np.linalg.norm(truth))
        obs = back_transform(op, op.A @ truth + sigma * rng.standard_normal(n), sigma)
        pen = PenaltyRule(sigma, float(rng.uniform(0.1, 2.0)), d.p)
        models: set = set()
        while len(models) < 3:
            models.add(_random_model(rng, d.p, 1, 4))
        cand = CandidateSet.from_fits([fit_projection(obs, d, dual, mm, pen) for mm in sorted(models)])
        w = solve_weights(cand, obs.z)
        F, g, z = cand.fitted_matrix, cand.linear_costs, obs.z
        R = z[None, :] - grid @ F.T
        values = grid @ g + (R**2).sum(axis=1)
        worst = max(worst, abs(w.objective_value - values.min()))
    return CheckResult("simplex solver vs grid search", worst <= 1e-6, worst, 1e-6)


@_timed
def check_lasso(seed=0, instances: int = 20, n: int = 16) -> CheckResult:
    """KKT certificates on toy instances and the orthonormal closed form."""
    rng = _rng(seed)
    op, d, dual = _setup(n)
    worst_kkt = 0.0
    for _ in range(instances):
        truth = d.Phi[:, rng.choice(d.p, size=3, replace=False)].sum(axis=1)
        y = op.A @ truth + 0.1 * rng.standard_normal(n)
        lam = float(rng.uniform(0.02, 0.8)) * lambda_max(y, dual)
        worst_kkt = max(worst_kkt, kkt_violation(fit_lasso(y, d, dual, lam), d, dual, y))
    ident = build_from_matrix(np.eye(n))
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    od = dictionary_from_matrix(Qm)
    odual = build_dual(od, ident)
    worst_cf = 0.0
    for _ in range(instances):
        y = rng.standard_normal(n)
        lam = float(rng.uniform(0.1, 2.0))
        fit = fit_lasso(y, od, odual, lam)
        worst_cf = max(worst_cf, float(np.max(np.abs(fit.coefficients - soft_threshold(od.Phi.T @ y, lam / 2)))))
    ok = worst_kkt <= 1e-6 and worst_cf <= 1e-10
    return CheckResult("lasso KKT and closed form", ok, worst_kkt, 1e-6, f"closed-form error {worst_cf:.3g}")


CHECKS = (
    check_identities,
    check_subadditivity,
    check_risk_decomposition,
    check_noise_tail,
    check_selection_oracle,
    check_aggregation_oracle,
    check_annealing,
    check_simplex_solver,
    check_lasso,
)


def invariant_suite(seed: int = 0, checks=CHECKS, log=None) -> list:
    """Run every check on its own child stream of ``seed``; returns the results."""
    children = np.random.SeedSequence(seed).spawn(len(CHECKS))
    results = []
    for fn, child in zip(CHECKS, children):
        if fn not in checks:
            continue
        res = fn(np.random.default_rng(child))
        if log is not None:
            log(res.line())
        results.append(res)
    return results
