"""Projection estimators over dictionary models, penalties and exact risks.

Models are sets of 0-based column indices. For a model ``M`` the estimator
``f_hat_M = H_M z`` projects the back-transformed data onto span(Phi_M); the
selection criterion is

    pi(M) = -||f_hat_M||^2 + Pen(M),   Pen(M) = 4 sigma^2 lam ln(p) ||Psi_M||_F^2,

which differs from the penalized empirical risk ``||z - f_hat_M||^2 + Pen(M)``
only by the constant ``||z||^2``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.linalg import cho_solve

from .dictionary import Dictionary, DualDictionary
from .errors import IndexOutOfRange, RankDeficientModel, SpaceTooLarge
from .operator import ForwardOperator, Observation

#: relative pivot tolerance for Phi_M^T Phi_M
RANK_RTOL = 1e-10
#: largest model space oracle_search will enumerate
MAX_ENUMERATION = 10_000_000


@dataclass(frozen=True, order=True)
class Model:
    indices: tuple = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"model indices must be strictly increasing: {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices: Iterable[int]) -> "Model":
        return cls(tuple(sorted(set(int(i) for i in indices))))

    @property
    def size(self) -> int:
        return len(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __contains__(self, j) -> bool:
        return j in self.indices

    def toggle(self, j: int) -> "Model":
        if j in self.indices:
            return Model(tuple(i for i in self.indices if i != j))
        return Model.of(self.indices + (j,))

    def union(self, other: "Model") -> "Model":
        return Model.of(self.indices + other.indices)

    def sort_key(self) -> tuple:
        """Tie-break order: smaller models first, then lexicographic."""
        return (self.size, self.indices)


@dataclass(frozen=True)
class ModelSpace:
    p: int
    size_cap: int
    gamma: float | None = None

    def __post_init__(self):
        if self.size_cap < 0:
            raise ValueError("size_cap must be nonnegative")

    def admits(self, model: Model, frobenius_sq: float | None = None, n: int | None = None) -> bool:
        if model.size > self.size_cap:
            return False
        if model.indices and (model.indices[0] < 0 or model.indices[-1] >= self.p):
            return False
        if self.gamma is not None:
            if frobenius_sq is None or n is None:
                raise ValueError("gamma filter needs frobenius_sq and n")
            return frobenius_sq <= self.gamma**2 * n
        return True

    def count(self) -> int:
        return sum(math.comb(self.p, k) for k in range(min(self.size_cap, self.p) + 1))


@dataclass(frozen=True)
class PenaltyRule:
    sigma: float
    lam: float
    p: int

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def log_p(self) -> float:
        return math.log(self.p)

    @property
    def coefficient(self) -> float:
        """Multiplier of ||Psi_M||_F^2 in Pen(M)."""
        return 4.0 * self.sigma**2 * self.lam * self.log_p

    def __call__(self, frobenius_sq):
        return penalty(self, frobenius_sq)


def penalty(pen: PenaltyRule, frobenius_sq):
    if np.any(np.asarray(frobenius_sq) < 0):
        raise ValueError("frobenius_sq must be nonnegative")
    return pen.coefficient * frobenius_sq


def lambda_from_theory(a: float, delta: float, nu_sq: float) -> float:
    """lam = (delta + 1) / (a nu^2_r), so that Pen matches the bound's minimum penalty."""
    if not 0 < a < 1 or delta <= 0 or nu_sq <= 0:
        raise ValueError("need 0 < a < 1, delta > 0, nu_sq > 0")
    return (delta + 1.0) / (a * nu_sq)


@dataclass(frozen=True, eq=False)
class ProjectionFit:
    model: Model
    coefficients: np.ndarray
    fitted: np.ndarray
    frobenius_sq: float
    penalty: float
    objective: float
    empirical_risk: float


@dataclass(frozen=True)
class RiskReport:
    bias_sq: float
    variance: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.bias_sq + self.variance)


def _check_indices(model: Model, p: int) -> None:
    if model.indices and (model.indices[0] < 0 or model.indices[-1] >= p):
        raise IndexOutOfRange(f"model {model.indices} outside 0..{p - 1}")


def gram_cholesky(G: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a model Gram matrix, or RankDeficientModel."""
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientModel("Phi_M^T Phi_M is not positive definite") from exc
    piv = np.diag(L)
    if piv.min() ** 2 < RANK_RTOL * np.diag(G).max():
        raise RankDeficientModel("Phi_M^T Phi_M is numerically singular")
    return L


def project(Phi_M: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients and orthogonal projection of ``v`` onto span(Phi_M)."""
    if Phi_M.shape[1] == 0:
        return np.zeros(0), np.zeros(Phi_M.shape[0])
    L = gram_cholesky(Phi_M.T @ Phi_M)
    theta = cho_solve((L, True), Phi_M.T @ v)
    return theta, Phi_M @ theta


def frobenius_sq(dual: DualDictionary, model: Model) -> float:
    _check_indices(model, dual.atom_variances.shape[0])
    return float(dual.atom_variances[list(model.indices)].sum())


def fit_projection(obs: Observation, dictionary: Dictionary, dual: DualDictionary,
                   model: Model, pen: PenaltyRule) -> ProjectionFit:
    _check_indices(model, dictionary.p)
    theta, fitted = project(dictionary.Phi[:, list(model.indices)], obs.z)
    frob = frobenius_sq(dual, model)
    pen_value = float(penalty(pen, frob))
    fitted_sq = float(fitted @ fitted)
    resid = obs.z - fitted
    return ProjectionFit(
        model=model,
        coefficients=theta,
        fitted=fitted,
        frobenius_sq=frob,
        penalty=pen_value,
        objective=-fitted_sq + pen_value,
        empirical_risk=float(resid @ resid),
    )


def exact_risk(op: ForwardOperator, dictionary: Dictionary, truth, sigma: float,
               model: Model) -> RiskReport:
    """Bias^2 + variance of ``f_hat_M`` under Gaussian noise of level ``sigma``."""
    truth = np.asarray(truth, dtype=float)
    _check_indices(model, dictionary.p)
    if model.size == 0:
        return RiskReport(bias_sq=float(truth @ truth), variance=0.0)
    Phi_M = dictionary.Phi[:, list(model.indices)]
    L = gram_cholesky(Phi_M.T @ Phi_M)
    f_M = Phi_M @ cho_solve((L, True), Phi_M.T @ truth)
    bias = f_M - truth
    # Tr((A^T A)^{-1} H_M) = Tr(G_M^{-1} Phi_M^T (A^T A)^{-1} Phi_M)
    C = Phi_M.T @ op.gram_solve(Phi_M)
    variance = sigma**2 * float(np.trace(cho_solve((L, True), C)))
    return RiskReport(bias_sq=float(bias @ bias), variance=variance)


def enumerate_models(p: int, size_cap: int) -> Iterator[Model]:
    """All models of size <= size_cap in tie-break order."""
    for k in range(min(size_cap, p) + 1):
        for combo in itertools.combinations(range(p), k):
            yield Model(combo)


def argmin_tiebreak(values: np.ndarray, rtol: float = 1e-12) -> int:
    """First position within ``rtol`` of the minimum.

    With candidates listed in tie-break order this returns the preferred
    minimizer.
    """
    values = np.asarray(values, dtype=float)
    best = np.nanmin(values)
    slack = rtol * max(1.0, abs(best))
    return int(np.flatnonzero(values <= best + slack)[0])


class ModelBank:
    """Batched linear algebra over a fixed list of models.

    Precomputes, for every model, the inverse Cholesky factor ``W_M`` of
    ``Phi_M^T Phi_M`` so that ``||H_M v||^2 = ||W_M Phi_M^T v||^2`` can be
    evaluated for many models (and many data vectors) at once. Rank-deficient
    models are kept in the list but flagged in ``valid``; their scores are
    +inf wherever a minimum is taken.
    """

    def __init__(self, dictionary: Dictionary, models: Sequence[Model],
                 dual: DualDictionary | None = None):
        self.dictionary = dictionary
        self.models = list(models)
        self.K = len(self.models)
        p = dictionary.p
        G = dictionary.gram()
        self.valid = np.ones(self.K, dtype=bool)
        self.frobenius_sq = np.zeros(self.K)
        if dual is not None:
            w = dual.atom_variances
            self.frobenius_sq = np.array([w[list(m.indices)].sum() for m in self.models])
        self._groups = []  # (positions, index array (N,k), W (N,k,k))
        by_size: dict[int, list[int]] = {}
        for pos, m in enumerate(self.models):
            _check_indices(m, p)
            by_size.setdefault(m.size, []).append(pos)
        for k, positions in sorted(by_size.items()):
            positions = np.array(positions)
            idx = np.array([self.models[i].indices for i in positions], dtype=np.intp).reshape(len(positions), k)
            if k == 0:
                self._groups.append((positions, idx, np.zeros((len(positions), 0, 0))))
                continue
            Gs = G[idx[:, :, None], idx[:, None, :]]
            eig = np.linalg.eigvalsh(Gs)
            ok = eig[:, 0] >= RANK_RTOL * np.maximum(eig[:, -1], 1e-300)
            self.valid[positions[~ok]] = False
            Gs[~ok] = np.eye(k)
            L = np.linalg.cholesky(Gs)
            W = np.linalg.inv(L)
            self._groups.append((positions, idx, W))

    def fitted_sq_norms(self, b: np.ndarray) -> np.ndarray:
        """``||H_M v||^2`` for every model given ``b = Phi^T v``.

        ``b`` may be a single length-p vector or an (R, p) batch; the result
        has shape (K,) or (R, K).
        """
        b = np.asarray(b, dtype=float)
        single = b.ndim == 1
        B = b[None, :] if single else b
        out = np.zeros((B.shape[0], self.K))
        for positions, idx, W in self._groups:
            if idx.shape[1] == 0:
                continue
            bm = B[:, idx]  # (R, N, k)
            u = np.einsum("nij,rnj->rni", W, bm)
            out[:, positions] = np.einsum("rni,rni->rn", u, u)
        out[:, ~self.valid] = np.nan
        return out[0] if single else out

    def coefficients_matrix(self, v: np.ndarray) -> np.ndarray:
        """Return the n x K matrix of projections ``H_M v``."""
        Phi = self.dictionary.Phi
        b = Phi.T @ v
        F = np.zeros((Phi.shape[0], self.K))
        for positions, idx, W in self._groups:
            if idx.shape[1] == 0:
                continue
            u = np.einsum("nij,nj->ni", W, b[idx])
            theta = np.einsum("nji,nj->ni", W, u)  # W^T u = G^{-1} b
            F[:, positions] = np.einsum("dnk,nk->dn", Phi[:, idx], theta)
        F[:, ~self.valid] = np.nan
        return F

    def variances(self, op: ForwardOperator, sigma: float) -> np.ndarray:
        """``sigma^2 Tr((A^T A)^{-1} H_M)`` for every model."""
        Phi = self.dictionary.Phi
        P = Phi.T @ op.gram_solve(Phi)
        out = np.zeros(self.K)
        for positions, idx, W in self._groups:
            if idx.shape[1] == 0:
                continue
            Ps = P[idx[:, :, None], idx[:, None, :]]
            out[positions] = np.einsum("nij,njk,nik->n", W, Ps, W)
        out[~self.valid] = np.nan
        return sigma**2 * out


def oracle_search(op: ForwardOperator, dictionary: Dictionary, truth, sigma: float,
                  space: ModelSpace, dual: DualDictionary | None = None) -> tuple[Model, RiskReport]:
    """Exhaustive minimizer of the exact quadratic risk over ``space``."""
    if space.count() > MAX_ENUMERATION:
        raise SpaceTooLarge(f"{space.count()} models exceed the enumeration limit {MAX_ENUMERATION}")
    truth = np.asarray(truth, dtype=float)
    if space.gamma is not None and dual is None:
        from .dictionary import build_dual
        dual = build_dual(dictionary, op)
    models = list(enumerate_models(dictionary.p, space.size_cap))
    bank = ModelBank(dictionary, models, dual)
    proj_sq = bank.fitted_sq_norms(dictionary.Phi.T @ truth)
    bias = np.maximum(truth @ truth - proj_sq, 0.0)
    total = bias + bank.variances(op, sigma)
    total = np.where(bank.valid, total, np.inf)
    if space.gamma is not None:
        total = np.where(bank.frobenius_sq <= space.gamma**2 * dictionary.n, total, np.inf)
    best = models[argmin_tiebreak(total)]
    return best, exact_risk(op, dictionary, truth, sigma, best)
