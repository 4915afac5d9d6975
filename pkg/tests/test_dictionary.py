import itertools
import math

import numpy as np
import pytest
import pywt
from hypothesis import given, settings, strategies as st

from sparseinv.dictionary import (
    Family,
    build_dual,
    build_paper_dictionary,
    build_small_dictionary,
    dictionary_from_matrix,
    estimate_nu_sq,
    haar_atom,
    load_dictionary,
)
from sparseinv.errors import AtomNotFound, DimensionMismatch, UnsupportedSize
from sparseinv.operator import build_exponential_operator, build_from_matrix, save_matrix


def test_paper_dictionary_layout(paper_setup):
    _, d, _ = paper_setup
    assert d.n == 128 and d.p == 192
    fams = [a.family for a in d.atoms]
    assert all(f in (Family.DAUBECHIES_SCALING, Family.DAUBECHIES_WAVELET) for f in fams[:128])
    assert all(f in (Family.HAAR_SCALING, Family.HAAR_WAVELET) for f in fams[128:])
    assert fams.count(Family.DAUBECHIES_SCALING) == 8
    assert fams.count(Family.HAAR_SCALING) == 8
    haar_levels = sorted({a.level for a in d.atoms if a.family == Family.HAAR_WAVELET})
    assert haar_levels == [3, 4, 5]
    np.testing.assert_allclose(np.linalg.norm(d.Phi, axis=0), 1.0, atol=1e-10)
    for j, atom in enumerate(d.atoms):
        assert atom.index == j
        assert atom.column is d.atoms[j].column
    np.testing.assert_array_equal(d.Phi[:, 37], d.atoms[37].column)


def test_haar_scaling_atom_entries(paper_setup):
    _, d, _ = paper_setup
    col = d.Phi[:, d.index_of(Family.HAAR_SCALING, 3, 0)]
    np.testing.assert_array_equal(col[:16], 0.25)
    np.testing.assert_array_equal(col[16:], 0.0)


def test_haar_wavelet_sign_pattern():
    v = haar_atom(16, 2, 1, scaling=False)
    np.testing.assert_allclose(v[4:6], 0.5)
    np.testing.assert_allclose(v[6:8], -0.5)
    assert np.count_nonzero(v) == 4


def test_daubechies_block_orthonormal(paper_setup):
    _, d, _ = paper_setup
    B = d.Phi[:, :128]
    np.testing.assert_allclose(B.T @ B, np.eye(128), atol=1e-8)


def test_daubechies_atoms_are_unit_coefficient_syntheses(paper_setup):
    # analysis with the same periodized filter bank returns a unit coefficient
    _, d, _ = paper_setup
    j = d.index_of(Family.DAUBECHIES_WAVELET, 4, 5)
    coeffs = pywt.wavedec(d.Phi[:, j], "db4", mode="periodization", level=4)
    flat = np.concatenate(coeffs)
    assert np.count_nonzero(np.abs(flat) > 1e-10) == 1
    assert abs(coeffs[2][5]) == pytest.approx(1.0)  # bands: approx(3), detail(3), detail(4), ...


def test_index_of_and_missing_atom(paper_setup):
    _, d, _ = paper_setup
    j = d.index_of(Family.DAUBECHIES_SCALING, 3, 4)
    assert d.atoms[j].label == "phi^D_{3,4}"
    with pytest.raises(AtomNotFound):
        d.index_of(Family.HAAR_WAVELET, 5, 53)


@pytest.mark.parametrize("n", [48, 100, 32])
def test_paper_dictionary_rejects_sizes(n):
    with pytest.raises(UnsupportedSize):
        build_paper_dictionary(n)


@pytest.mark.parametrize("n, p", [(8, 12), (16, 24), (32, 48)])
def test_small_dictionary_sizes(n, p):
    d = build_small_dictionary(n)
    assert d.p == p
    np.testing.assert_allclose(np.linalg.norm(d.Phi, axis=0), 1.0, atol=1e-12)


def test_dual_identity_operator():
    d = build_small_dictionary(16)
    dual = build_dual(d, build_from_matrix(np.eye(16)))
    np.testing.assert_allclose(dual.Psi, d.Phi, atol=1e-12)
    np.testing.assert_allclose(dual.atom_variances, 1.0, atol=1e-12)


def test_dual_orthogonal_operator(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((16, 16)))
    d = build_small_dictionary(16)
    dual = build_dual(d, build_from_matrix(Q))
    np.testing.assert_allclose(dual.Psi, Q @ d.Phi, atol=1e-12)
    np.testing.assert_allclose(dual.atom_variances, 1.0, atol=1e-12)


@pytest.mark.parametrize("n", [32, 128])
def test_dual_residual_exponential(n):
    op = build_exponential_operator(n)
    d = build_small_dictionary(n) if n == 32 else build_paper_dictionary(n)
    dual = build_dual(d, op)
    resid = np.linalg.norm(op.A.T @ dual.Psi - d.Phi, axis=0) / np.linalg.norm(d.Phi, axis=0)
    assert resid.max() <= 1e-6
    np.testing.assert_allclose(dual.atom_variances, (dual.Psi**2).sum(axis=0), rtol=0, atol=1e-10)


def test_dual_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        build_dual(build_small_dictionary(16), build_exponential_operator(8))


def test_frobenius_trace_identity(rng):
    n = 32
    op = build_exponential_operator(n)
    d = build_small_dictionary(n)
    dual = build_dual(d, op)
    AtA = op.A.T @ op.A
    for _ in range(20):
        M = rng.choice(d.p, size=int(rng.integers(1, 8)), replace=False)
        PhiM = d.Phi[:, M]
        trace = np.trace(np.linalg.solve(AtA, PhiM @ PhiM.T))
        assert dual.atom_variances[M].sum() == pytest.approx(trace, rel=1e-6)


def test_variance_grows_with_level(paper_setup):
    _, d, dual = paper_setup
    for fam in (Family.DAUBECHIES_WAVELET, Family.HAAR_WAVELET):
        levels = sorted({a.level for a in d.atoms if a.family == fam})
        means = [np.mean([dual.atom_variances[a.index] for a in d.atoms
                          if a.family == fam and a.level == j]) for j in levels]
        assert all(b >= a for a, b in zip(means, means[1:])), means


def test_nu_sq_orthonormal():
    d = dictionary_from_matrix(np.eye(6))
    for r in (1, 3, 6):
        est = estimate_nu_sq(d, r)
        assert est.method == "Exhaustive"
        assert est.nu_sq_lower == pytest.approx(1.0, abs=1e-12)


def test_nu_sq_duplicate_column(rng):
    X = rng.standard_normal((5, 4))
    X = np.column_stack([X, X[:, 1]])
    d = dictionary_from_matrix(X)
    assert estimate_nu_sq(d, 1).nu_sq_lower == pytest.approx(1.0)
    assert estimate_nu_sq(d, 2).nu_sq_lower == pytest.approx(0.0, abs=1e-12)


def test_nu_sq_brute_force(rng):
    X = rng.standard_normal((6, 12))
    d = dictionary_from_matrix(X)
    G = d.Phi.T @ d.Phi
    subsets = [s for k in (1, 2, 3) for s in itertools.combinations(range(12), k)]
    assert len(subsets) == 298
    brute = min(np.linalg.eigvalsh(G[np.ix_(s, s)])[0] for s in subsets)
    est = estimate_nu_sq(d, 3)
    assert est.method == "Exhaustive" and est.subsets_evaluated == 298
    assert est.nu_sq_lower == pytest.approx(brute, abs=1e-12)


def test_nu_sq_monotone_and_sampled():
    d = build_small_dictionary(16)
    vals = [estimate_nu_sq(d, r).nu_sq_lower for r in range(1, 5)]
    assert all(b <= a + 1e-14 for a, b in zip(vals, vals[1:]))
    assert vals[3] > 0
    sampled = estimate_nu_sq(d, 4, budget=500, seed=3)
    assert sampled.method == "RandomSubsets" and sampled.subsets_evaluated == 500
    assert sampled.nu_sq_lower >= vals[3] - 1e-14
    assert estimate_nu_sq(d, 4, budget=500, seed=3).nu_sq_lower == sampled.nu_sq_lower


def test_custom_dictionary_file_round_trip(tmp_path, rng):
    X = rng.standard_normal((8, 5)) * 3
    save_matrix(tmp_path / "dict.txt", X)
    d = load_dictionary(tmp_path / "dict.txt")
    assert d.p == 5 and all(a.family == Family.CUSTOM for a in d.atoms)
    np.testing.assert_allclose(d.Phi, X / np.linalg.norm(X, axis=0), atol=1e-15)
    with pytest.raises(DimensionMismatch):
        dictionary_from_matrix(np.zeros((3, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 7), st.integers(0, 1))
def test_haar_atoms_unit_norm(shift, scaling):
    v = haar_atom(64, 3, shift, scaling=bool(scaling))
    assert math.isclose(float(v @ v), 1.0, rel_tol=1e-14)
    expected_sum = math.sqrt(8) if scaling else 0.0
    assert math.isclose(float(v.sum()), expected_sum, abs_tol=1e-12)
