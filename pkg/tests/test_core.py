import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qudit_compiler.core import (
    SSW02,
    ProcessMatrix,
    change_basis,
    gell_mann_matrices,
    generalized_pauli_basis,
    haar_random_unitary,
    pauli_matrices,
    process_fidelity,
    projection_operator_set,
    unitary_to_chi,
)

from oracles import EXP_MINUS_I_PI4_X, LAMBDA8_DIAG, apply_kraus, clock_shift, pauli_expansion, random_kraus

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def kraus_to_chi(kraus, basis):
    """Process matrix of a Kraus channel by expanding each Kraus operator."""
    c = np.array([basis.coefficients(k) for k in kraus])
    return ProcessMatrix(c.T @ c.conj(), basis)


# ---- Gell-Mann and Pauli generators -----------------------------------------


def test_gell_mann_hermitian_traceless():
    for lam in gell_mann_matrices():
        assert np.max(np.abs(lam - lam.conj().T)) < 1e-14
        assert abs(np.trace(lam)) < 1e-14


def test_gell_mann_orthogonality():
    lam = gell_mann_matrices()
    gram = np.einsum("mab,nba->mn", lam, lam)
    np.testing.assert_allclose(gram, 2 * np.eye(8), atol=1e-14)


def test_gell_mann_diagonals():
    lam = gell_mann_matrices()
    np.testing.assert_allclose(lam[2], np.diag([1, -1, 0]), atol=1e-15)
    np.testing.assert_allclose(lam[7], np.diag(LAMBDA8_DIAG), atol=1e-15)
    assert abs(np.trace(lam[7] @ lam[2])) < 1e-15


def test_gell_mann_index_order():
    lam = gell_mann_matrices()
    # lambda_1/2 couple 0-1, lambda_4/5 couple 0-2, lambda_6/7 couple 1-2
    for m, (i, j) in {0: (0, 1), 1: (0, 1), 3: (0, 2), 4: (0, 2), 5: (1, 2), 6: (1, 2)}.items():
        assert abs(lam[m][i, j]) == pytest.approx(1.0)
    assert np.isrealobj(lam[0]) or np.all(lam[0].imag == 0)
    assert lam[1][0, 1] == pytest.approx(-1j)


def test_pauli_matrices():
    x, y, z = pauli_matrices()
    np.testing.assert_allclose(x @ y, 1j * z, atol=1e-15)


def test_generalized_pauli_basis():
    basis = generalized_pauli_basis(3)
    ops = basis.operators
    assert len(basis) == 9
    x3, z3 = ops[basis.labels.index("X1")], ops[basis.labels.index("Z1")]
    beta = -0.5 + 1j * np.sqrt(3) / 2
    np.testing.assert_allclose(np.diag(z3), [1, beta, beta**2], atol=1e-15)
    np.testing.assert_allclose(np.linalg.matrix_power(x3, 3), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(np.linalg.matrix_power(z3, 3), np.eye(3), atol=1e-14)
    for p in ops:
        np.testing.assert_allclose(p.conj().T @ p, np.eye(3), atol=1e-14)
    gram = np.einsum("mab,nab->mn", ops.conj(), ops)
    np.testing.assert_allclose(gram, 3 * np.eye(9), atol=1e-13)
    # the shift moves |j> to |j+1>, matching the oracle's construction
    ref_x, ref_z = clock_shift(3)
    np.testing.assert_allclose(x3, ref_x, atol=1e-15)
    np.testing.assert_allclose(z3, ref_z, atol=1e-14)


# ---- projection operator set ------------------------------------------------


def test_projection_set_identity_first():
    basis = projection_operator_set(3)
    np.testing.assert_array_equal(basis.operators[0], np.eye(3))
    assert len(basis) == 9


def test_projection_set_qubit_closed_form():
    basis = projection_operator_set(2)
    np.testing.assert_allclose(basis.operators[1], EXP_MINUS_I_PI4_X, atol=1e-15)


@pytest.mark.parametrize("d", [2, 3])
def test_projection_set_unitary_and_complete(d):
    basis = projection_operator_set(d)
    for a in basis.operators:
        np.testing.assert_allclose(a.conj().T @ a, np.eye(d), atol=1e-12)
    assert np.linalg.matrix_rank(basis.gram()) == d * d
    assert basis.is_complete()


def test_projection_set_rejects_dimension():
    with pytest.raises(ValueError):
        projection_operator_set(4)


# ---- Haar sampling ----------------------------------------------------------


def test_haar_deterministic():
    np.testing.assert_array_equal(haar_random_unitary(3, seed=7), haar_random_unitary(3, seed=7))
    assert not np.allclose(haar_random_unitary(3, seed=7), haar_random_unitary(3, seed=8))


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_haar_unitary(seed):
    u = haar_random_unitary(3, seed=seed)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(3), atol=1e-12)
    assert abs(abs(np.linalg.det(u)) - 1) < 1e-10


def test_haar_special_has_unit_determinant():
    u = haar_random_unitary(3, seed=11, special=True)
    assert abs(np.linalg.det(u) - 1) < 1e-10


def test_haar_first_moment():
    rng = np.random.default_rng(2024)
    samples = np.array([abs(haar_random_unitary(2, seed=int(s))[0, 0]) ** 2 for s in rng.integers(0, 2**62, 10_000)])
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    assert abs(samples.mean() - 0.5) < 3 * se


def test_haar_phase_distribution_uniform():
    # without the phase fix the diagonal of R biases arg(U00); E[U00] must vanish
    vals = np.array([haar_random_unitary(2, seed=s)[0, 0] for s in range(4000)])
    assert abs(vals.mean()) < 4 * vals.std() / np.sqrt(len(vals))


# ---- process matrices -------------------------------------------------------


def test_identity_chi():
    pm = unitary_to_chi(np.eye(3), projection_operator_set(3))
    target = np.zeros((9, 9))
    target[0, 0] = 1
    np.testing.assert_allclose(pm.chi, target, atol=1e-12)


@given(seeds, st.sampled_from([2, 3]))
@settings(max_examples=30, deadline=None)
def test_unitary_chi_properties(seed, d):
    u = haar_random_unitary(d, seed=seed)
    pm = unitary_to_chi(u, projection_operator_set(d))
    chi = pm.chi
    np.testing.assert_allclose(chi, chi.conj().T, atol=1e-12)
    ev = np.linalg.eigvalsh(chi)
    assert ev[0] > -1e-10
    assert np.sum(ev > 1e-8) == 1
    assert pm.tp_residual() < 1e-10
    rho = random_kraus(d, 1, np.random.default_rng(seed))[0]
    rho = rho @ rho.conj().T
    rho /= np.trace(rho)
    np.testing.assert_allclose(pm.apply(rho), u @ rho @ u.conj().T, atol=1e-10)


def test_unitary_to_chi_rejects_non_unitary():
    with pytest.raises(ValueError):
        unitary_to_chi(np.diag([1, 1, 0.5]), projection_operator_set(3))


def test_ssw02_chi_in_pauli_basis():
    """Direct clock/shift expansion of sSW02 fixes its Pauli-basis chi."""
    c = pauli_expansion(SSW02).ravel()  # index a*3 + b for Z^a X^b
    expected = np.outer(c, c.conj())
    pm = unitary_to_chi(SSW02, generalized_pauli_basis(3))
    np.testing.assert_allclose(pm.chi, expected, atol=1e-12)
    # same channel expressed in the A_m set then moved to the Pauli basis
    via_a = change_basis(unitary_to_chi(SSW02, projection_operator_set(3)), generalized_pauli_basis(3))
    np.testing.assert_allclose(via_a.chi, expected, atol=1e-12)
    # identity weight |tr U / 3|^2 with tr U = 1 + sqrt(2)
    assert expected[0, 0].real == pytest.approx(((1 + 2**0.5) / 3) ** 2, abs=1e-12)


# ---- fidelity ---------------------------------------------------------------


def test_fidelity_self_and_orthogonal():
    basis = projection_operator_set(2)
    x = pauli_matrices()[0]
    ci, cx = unitary_to_chi(np.eye(2), basis), unitary_to_chi(x, basis)
    for method in ("uhlmann", "trace_norm"):
        assert process_fidelity(ci, ci, method) == pytest.approx(1.0, abs=1e-10)
        assert process_fidelity(ci, cx, method) == pytest.approx(0.0, abs=1e-10)


@given(seeds, seeds)
@settings(max_examples=30, deadline=None)
def test_fidelity_matches_trace_overlap(s1, s2):
    basis = projection_operator_set(3)
    u, v = haar_random_unitary(3, seed=s1), haar_random_unitary(3, seed=s2)
    expected = abs(np.trace(u.conj().T @ v)) ** 2 / 9
    f = process_fidelity(unitary_to_chi(u, basis), unitary_to_chi(v, basis))
    assert f == pytest.approx(expected, abs=1e-9)


@given(seeds, st.integers(1, 4), st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_fidelity_range_on_cptp(seed, r1, r2):
    rng = np.random.default_rng(seed)
    basis = generalized_pauli_basis(3)
    a = kraus_to_chi(random_kraus(3, r1, rng), basis)
    b = kraus_to_chi(random_kraus(3, r2, rng), basis)
    for method in ("uhlmann", "trace_norm"):
        f = process_fidelity(a, b, method)
        assert -1e-12 <= f <= 1 + 1e-9
        assert f == pytest.approx(process_fidelity(b, a, method), abs=1e-9)


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_fidelity_basis_invariant(seed):
    rng = np.random.default_rng(seed)
    a_basis, p_basis = projection_operator_set(3), generalized_pauli_basis(3)
    a = kraus_to_chi(random_kraus(3, 2, rng), a_basis)
    b = kraus_to_chi(random_kraus(3, 3, rng), a_basis)
    f_a = process_fidelity(a, b)
    f_p = process_fidelity(change_basis(a, p_basis), change_basis(b, p_basis))
    assert f_a == pytest.approx(f_p, abs=1e-10)


def test_kraus_chi_matches_channel():
    rng = np.random.default_rng(5)
    kraus = random_kraus(3, 3, rng)
    pm = kraus_to_chi(kraus, projection_operator_set(3))
    rho = np.diag([0.5, 0.3, 0.2]).astype(complex)
    np.testing.assert_allclose(pm.apply(rho), apply_kraus(kraus, rho), atol=1e-12)
    assert pm.tp_residual() < 1e-10


def test_fidelity_dimension_mismatch():
    with pytest.raises(ValueError):
        process_fidelity(unitary_to_chi(np.eye(2), projection_operator_set(2)), unitary_to_chi(np.eye(3), projection_operator_set(3)))
