"""Discrete forward operators ``y = A f + sigma * eps`` and the back-transform
``z = (A^T A)^{-1} A^T y``.

The Gram matrix ``A^T A`` is never inverted explicitly.  A reduced QR
factorization ``A = Q R`` is cached at construction, so that

    (A^T A)^{-1} v = R^{-1} R^{-T} v,      z = R^{-1} Q^T y.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, SingularOperator

#: relative threshold on |R_ii| below which A is treated as rank deficient
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class ForwardOperator:
    A: np.ndarray
    Q: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    cond_estimate: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    def gram_solve(self, v: np.ndarray) -> np.ndarray:
        """Return ``(A^T A)^{-1} v`` for a vector or a matrix of columns."""
        w = solve_triangular(self.R, v, trans="T", lower=False, check_finite=False)
        return solve_triangular(self.R, w, lower=False, check_finite=False)

    def dual_of(self, v: np.ndarray) -> np.ndarray:
        """Return ``A (A^T A)^{-1} v``, i.e. ``Q R^{-T} v``."""
        w = solve_triangular(self.R, v, trans="T", lower=False, check_finite=False)
        return self.Q @ w


@dataclass(frozen=True, eq=False)
class Observation:
    y: np.ndarray
    sigma: float
    z: np.ndarray
    meta: dict = field(default_factory=dict)


def build_from_matrix(A) -> ForwardOperator:
    A = np.array(A, dtype=float, copy=True)
    if A.ndim != 2:
        raise DimensionMismatch(f"operator must be a matrix, got shape {A.shape}")
    n, m = A.shape
    if m < 1 or n < m:
        raise DimensionMismatch(f"need n >= m >= 1, got {n}x{m}")
    Q, R = np.linalg.qr(A, mode="reduced")
    diag = np.abs(np.diag(R))
    top = diag.max()
    if not np.all(np.isfinite(R)) or top == 0.0 or diag.min() < SINGULAR_RTOL * top:
        raise SingularOperator("A^T A is numerically singular")
    s = np.linalg.svd(R, compute_uv=False)
    cond = float((s[0] / s[-1]) ** 2)
    A.setflags(write=False)
    Q.setflags(write=False)
    R.setflags(write=False)
    return ForwardOperator(A=A, Q=Q, R=R, cond_estimate=cond)


def exponential_matrix(n: int) -> np.ndarray:
    """Lower-triangular kernel ``A_ij = exp(-(i - j) / n)`` for ``j <= i``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    i = np.arange(n)
    diff = i[:, None] - i[None, :]
    return np.where(diff >= 0, np.exp(-np.maximum(diff, 0) / n), 0.0)


def build_exponential_operator(n: int) -> ForwardOperator:
    return build_from_matrix(exponential_matrix(n))


def apply_forward(op: ForwardOperator, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (op.m,):
        raise DimensionMismatch(f"expected vector of length {op.m}, got {f.shape}")
    return op.A @ f


def back_transform(op: ForwardOperator, y, sigma: float, meta: dict | None = None) -> Observation:
    y = np.asarray(y, dtype=float)
    if y.shape != (op.n,):
        raise DimensionMismatch(f"expected y of length {op.n}, got {y.shape}")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    # least-squares solution of A z = y, identical to (A^T A)^{-1} A^T y
    z = solve_triangular(op.R, op.Q.T @ y, lower=False, check_finite=False)
    return Observation(y=y, sigma=float(sigma), z=z, meta=dict(meta or {}))


def load_matrix(path) -> np.ndarray:
    """Read a dense matrix, one whitespace-separated row per line."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(tok) for tok in line.split()])
    if not rows:
        raise DimensionMismatch(f"{path}: empty matrix file")
    if len({len(r) for r in rows}) != 1:
        raise DimensionMismatch(f"{path}: ragged rows")
    return np.array(rows)


def save_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [" ".join(f"{v:.17g}" for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def load_operator(path) -> ForwardOperator:
    return build_from_matrix(load_matrix(path))
