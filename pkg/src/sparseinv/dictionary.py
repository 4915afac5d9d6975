"""Overcomplete wavelet dictionaries, their duals and sparse-eigenvalue diagnostics."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pywt

from .errors import AtomNotFound, DimensionMismatch, UnsupportedSize
from .operator import ForwardOperator, load_matrix

#: orthonormal filter used for the smooth basis (8 taps, 4 vanishing moments)
DAUBECHIES_FILTER = "db4"


class Family(str, enum.Enum):
    DAUBECHIES_SCALING = "DaubechiesScaling"
    DAUBECHIES_WAVELET = "DaubechiesWavelet"
    HAAR_SCALING = "HaarScaling"
    HAAR_WAVELET = "HaarWavelet"
    CUSTOM = "Custom"


@dataclass(frozen=True, eq=False)
class Atom:
    index: int
    family: Family
    level: int
    shift: int
    column: np.ndarray

    @property
    def label(self) -> str:
        if self.family is Family.CUSTOM:
            return f"custom[{self.index}]"
        kind = "phi" if self.family.value.endswith("Scaling") else "psi"
        basis = "D" if self.family.value.startswith("Daubechies") else "H"
        return f"{kind}^{basis}_{{{self.level},{self.shift}}}"


@dataclass(frozen=True, eq=False)
class Dictionary:
    atoms: tuple
    Phi: np.ndarray

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def p(self) -> int:
        return self.Phi.shape[1]

    def index_of(self, family: Family | str, level: int, shift: int) -> int:
        """0-based column index of the named atom."""
        family = Family(family)
        for atom in self.atoms:
            if atom.family is family and atom.level == level and atom.shift == shift:
                return atom.index
        raise AtomNotFound(f"no atom {family.value} level={level} shift={shift}")

    def gram(self) -> np.ndarray:
        return self.Phi.T @ self.Phi


@dataclass(frozen=True, eq=False)
class DualDictionary:
    Psi: np.ndarray
    atom_variances: np.ndarray


@dataclass(frozen=True)
class SparseEigenEstimate:
    r: int
    nu_sq_lower: float
    method: str  # "Exhaustive" or "RandomSubsets"
    subsets_evaluated: int


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _from_columns(cols: list, meta: list) -> Dictionary:
    Phi = np.column_stack(cols)
    Phi.setflags(write=False)
    atoms = tuple(
        Atom(index=i, family=fam, level=lev, shift=k, column=Phi[:, i])
        for i, (fam, lev, k) in enumerate(meta)
    )
    return Dictionary(atoms=atoms, Phi=Phi)


def _periodized_basis(n: int, coarsest: int, wavelet: str) -> tuple[list, list]:
    levels = int(math.log2(n))
    sizes = [2**coarsest] + [2**j for j in range(coarsest, levels)]
    cols, meta = [], []
    for band, size in enumerate(sizes):
        level = coarsest if band == 0 else coarsest + band - 1
        for k in range(size):
            coeffs = [np.zeros(s) for s in sizes]
            coeffs[band][k] = 1.0
            cols.append(pywt.waverec(coeffs, wavelet, mode="periodization"))
            meta.append((band == 0, level, k))
    return cols, meta


def haar_atom(n: int, level: int, shift: int, scaling: bool) -> np.ndarray:
    """Discrete Haar scaling/wavelet vector on a length-``n`` dyadic grid."""
    width = n >> level
    if width < 2 or not 0 <= shift < 2**level:
        raise AtomNotFound(f"Haar atom level={level} shift={shift} not defined for n={n}")
    v = np.zeros(n)
    start = shift * width
    amp = 1.0 / math.sqrt(width)
    if scaling:
        v[start:start + width] = amp
    else:
        half = width // 2
        v[start:start + half] = amp
        v[start + half:start + width] = -amp
    return v


def build_wavelet_dictionary(n: int, coarsest: int, haar_max_level: int,
                             haar_coarsest: int | None = None,
                             wavelet: str = DAUBECHIES_FILTER) -> Dictionary:
    """Union of a periodized Daubechies basis and a truncated Haar system.

    The Daubechies block is a full orthonormal basis of R^n with coarsest
    level ``coarsest``. The Haar block holds the scaling atoms at
    ``haar_coarsest`` (default: ``coarsest``) plus wavelet atoms at levels
    ``haar_coarsest..haar_max_level``; ``haar_max_level = haar_coarsest - 1``
    keeps scaling atoms only.
    """
    if not _is_power_of_two(n) or n < 4:
        raise UnsupportedSize(f"n must be a power of 2 (>= 4), got {n}")
    top = int(math.log2(n))
    hc = coarsest if haar_coarsest is None else haar_coarsest
    if not 0 <= coarsest < top or not 0 <= hc < top or not hc - 1 <= haar_max_level < top:
        raise UnsupportedSize(f"levels coarsest={coarsest}, haar {hc}..{haar_max_level} invalid for n={n}")
    cols, raw = _periodized_basis(n, coarsest, wavelet)
    meta = [
        (Family.DAUBECHIES_SCALING if sc else Family.DAUBECHIES_WAVELET, lev, k)
        for sc, lev, k in raw
    ]
    for k in range(2**hc):
        cols.append(haar_atom(n, hc, k, scaling=True))
        meta.append((Family.HAAR_SCALING, hc, k))
    for j in range(hc, haar_max_level + 1):
        for k in range(2**j):
            cols.append(haar_atom(n, j, k, scaling=False))
            meta.append((Family.HAAR_WAVELET, j, k))
    return _from_columns(cols, meta)


def build_paper_dictionary(n: int = 128) -> Dictionary:
    """Daubechies basis (coarsest level 3) plus 64 Haar atoms at levels 3..5."""
    if not _is_power_of_two(n) or n < 64:
        raise UnsupportedSize(f"n must be a power of 2 and >= 64, got {n}")
    return build_wavelet_dictionary(n, coarsest=3, haar_max_level=5)


def build_small_dictionary(n: int) -> Dictionary:
    """Desk-scale two-basis dictionary with p = 3n/2 atoms.

    Daubechies basis from level 1, Haar block from level 2. Starting the two
    blocks at different levels keeps their scaling spans from sharing the
    constant vector through only a handful of atoms, so that small sparse
    eigenvalues stay positive (n=16: nu^2_4 > 0).
    """
    top = int(math.log2(n)) if _is_power_of_two(n) else 0
    if top < 3:
        raise UnsupportedSize(f"n must be a power of 2 and >= 8, got {n}")
    return build_wavelet_dictionary(n, coarsest=1, haar_coarsest=2, haar_max_level=top - 2)


def dictionary_from_matrix(Phi) -> Dictionary:
    """Wrap arbitrary columns as a custom dictionary, normalizing each column."""
    Phi = np.array(Phi, dtype=float)
    if Phi.ndim != 2 or Phi.shape[1] == 0:
        raise DimensionMismatch("dictionary must be a non-empty matrix")
    norms = np.linalg.norm(Phi, axis=0)
    if np.any(norms == 0):
        raise DimensionMismatch("dictionary contains a zero column")
    Phi = Phi / norms
    return _from_columns(list(Phi.T), [(Family.CUSTOM, 0, j) for j in range(Phi.shape[1])])


def load_dictionary(path) -> Dictionary:
    return dictionary_from_matrix(load_matrix(Path(path)))


def build_dual(dictionary: Dictionary, op: ForwardOperator) -> DualDictionary:
    if dictionary.n != op.m:
        raise DimensionMismatch(f"dictionary has n={dictionary.n}, operator has m={op.m}")
    Psi = op.dual_of(dictionary.Phi)
    variances = np.einsum("ij,ij->j", Psi, Psi)
    Psi.setflags(write=False)
    variances.setflags(write=False)
    return DualDictionary(Psi=Psi, atom_variances=variances)


def _min_eig_over(G: np.ndarray, subsets: np.ndarray) -> float:
    sub = G[subsets[:, :, None], subsets[:, None, :]]
    return float(np.linalg.eigvalsh(sub)[:, 0].min())


def estimate_nu_sq(dictionary: Dictionary, r: int, budget: int = 1_000_000,
                   seed: int = 0, chunk: int = 20_000) -> SparseEigenEstimate:
    """Smallest eigenvalue of ``Phi_S^T Phi_S`` over column subsets ``|S| <= r``.

    Exhaustive when ``C(p, r) <= budget``; otherwise the minimum over
    ``budget`` random subsets of size ``r``, which only bounds the true
    value from above.
    """
    p = dictionary.p
    if not 1 <= r <= p:
        raise ValueError(f"r must lie in 1..{p}")
    G = dictionary.gram()
    best = math.inf
    if math.comb(p, r) <= budget:
        count = 0
        for k in range(1, r + 1):
            combos = itertools.combinations(range(p), k)
            while True:
                block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
                if block.size == 0:
                    break
                best = min(best, _min_eig_over(G, block))
                count += len(block)
        method = "Exhaustive"
    else:
        rng = np.random.default_rng(seed)
        count = 0
        while count < budget:
            m = min(chunk, budget - count)
            block = np.sort(np.argsort(rng.random((m, p)), axis=1)[:, :r], axis=1)
            best = min(best, _min_eig_over(G, block))
            count += m
        method = "RandomSubsets"
    return SparseEigenEstimate(r=r, nu_sq_lower=max(best, 0.0), method=method,
                               subsets_evaluated=count)
