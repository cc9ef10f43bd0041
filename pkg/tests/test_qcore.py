import numpy as np
import pytest
from hypothesis import given, strategies as st

from dcqd_lab import qcore
from dcqd_lab.exceptions import DomainError, NotPSDError

R2 = np.sqrt(2)


def test_pauli_matrices():
    np.testing.assert_array_equal(qcore.pauli(1), np.eye(2))
    np.testing.assert_array_equal(qcore.pauli(2), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(qcore.pauli(3), [[0, -1j], [1j, 0]])
    np.testing.assert_array_equal(qcore.pauli(4), [[1, 0], [0, -1]])


@pytest.mark.parametrize("bad", [0, 5, -1, 2.5, "x"])
def test_pauli_index_out_of_range(bad):
    with pytest.raises(DomainError):
        qcore.pauli(bad)


def test_pauli_orthogonality():
    for m in range(1, 5):
        for n in range(1, 5):
            assert abs(np.trace(qcore.pauli(m) @ qcore.pauli(n)) - 2 * (m == n)) < 1e-14


def test_pauli_constants_are_read_only():
    with pytest.raises(ValueError):
        qcore.PAULIS[1][0, 0] = 5


def test_pauli_basis_two_qubits_orthonormal():
    basis = qcore.pauli_basis(2)
    assert len(basis) == 16
    gram = np.array([[np.trace(a.conj().T @ b) for b in basis] for a in basis])
    np.testing.assert_allclose(gram, 4 * np.eye(16), atol=1e-14)
    np.testing.assert_array_equal(basis[4 * 1 + 3], np.kron(qcore.SIGMA_X, qcore.SIGMA_Z))


def test_bell_states():
    np.testing.assert_allclose(qcore.bell_vector(1), np.array([1, 0, 0, 1]) / R2)
    np.testing.assert_allclose(qcore.bell_vector(4), np.array([1, 0, 0, -1]) / R2)
    np.testing.assert_allclose(qcore.bell_vector(2), np.array([0, 1, 1, 0]) / R2)
    np.testing.assert_allclose(qcore.bell_vector(3), np.array([0, 1, -1, 0]) / R2)
    np.testing.assert_allclose(qcore.bell_vector(2, table_convention=True), np.array([0, 1, 1j, 0]) / R2)
    np.testing.assert_allclose(qcore.bell_vector(3, table_convention=True), np.array([0, 1, -1j, 0]) / R2)
    rho = qcore.bell_state(1)
    np.testing.assert_allclose(rho, np.outer([1, 0, 0, 1], [1, 0, 0, 1]) / 2)
    with pytest.raises(DomainError):
        qcore.bell_state(0)


@pytest.mark.parametrize("table", [False, True])
def test_bell_projectors_resolve_identity(table):
    proj = qcore.bell_projectors(table)
    np.testing.assert_allclose(sum(proj), np.eye(4), atol=1e-15)
    for i, p in enumerate(proj):
        for j, q in enumerate(proj):
            np.testing.assert_allclose(p @ q, p if i == j else 0, atol=1e-15)


def test_psi_subspace_same_in_both_conventions():
    a = qcore.bell_projectors(False)
    b = qcore.bell_projectors(True)
    np.testing.assert_allclose(a[1] + a[2], b[1] + b[2], atol=1e-15)


def test_kron_examples():
    np.testing.assert_array_equal(qcore.kron(np.eye(2), np.eye(2)), np.eye(4))
    phi_p, phi_m = qcore.bell_vector(1), qcore.bell_vector(4)
    out = qcore.kron(qcore.SIGMA_Z, qcore.IDENTITY) @ phi_p
    assert abs(abs(np.vdot(phi_m, out)) - 1) < 1e-15
    np.testing.assert_allclose(qcore.kron(qcore.SIGMA_X, qcore.SIGMA_X) @ phi_p, phi_p)


def test_kron_big_endian():
    # leftmost factor is the most significant qubit: |1> x |0> = |10> = index 2
    v = qcore.kron(qcore.ket("1")[:, None], qcore.ket("0")[:, None]).ravel()
    np.testing.assert_array_equal(v, qcore.ket("10"))
    assert qcore.ket("10")[2] == 1


def test_partial_trace_examples():
    np.testing.assert_allclose(qcore.partial_trace(qcore.bell_state(1), [0]), np.eye(2) / 2)
    np.testing.assert_allclose(qcore.partial_trace(qcore.bell_state(1), [1]), np.eye(2) / 2)
    rho = qcore.projector(qcore.ket("01"))
    np.testing.assert_allclose(qcore.partial_trace(rho, [0]), qcore.projector(qcore.ket("0")))
    np.testing.assert_allclose(qcore.partial_trace(rho, [1]), qcore.projector(qcore.ket("1")))
    np.testing.assert_allclose(qcore.partial_trace(rho, [0, 1]), rho)


@pytest.mark.parametrize("keep", [[], [2], [0, 0]])
def test_partial_trace_invalid(keep):
    with pytest.raises(DomainError):
        qcore.partial_trace(qcore.bell_state(1), keep)


def test_partial_trace_composes(rng):
    for _ in range(20):
        rho = qcore.random_density_matrix(16, rng)
        joint = qcore.partial_trace(rho, [1, 3])
        step = qcore.partial_trace(qcore.partial_trace(rho, [0, 1, 3]), [1, 2])
        np.testing.assert_allclose(step, joint, atol=1e-12)
        assert abs(np.trace(joint) - 1) < 1e-12


def test_embed_operator_matches_kron():
    x = qcore.SIGMA_X
    np.testing.assert_array_equal(qcore.embed_operator(x, [1], 3), np.kron(np.kron(np.eye(2), x), np.eye(2)))
    cnot = np.eye(4)[[0, 1, 3, 2]]
    # control on qubit 2, target qubit 0 of three
    e = qcore.embed_operator(cnot, [2, 0], 3)
    assert np.allclose(e @ qcore.ket("001"), qcore.ket("101"))
    assert np.allclose(e @ qcore.ket("100"), qcore.ket("100"))


def test_psd_sqrt_examples():
    np.testing.assert_allclose(qcore.psd_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(qcore.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    p = qcore.bell_state(1)
    np.testing.assert_allclose(qcore.psd_sqrt(p), p, atol=1e-12)
    with pytest.raises(NotPSDError):
        qcore.psd_sqrt(np.diag([1.0, -1e-6]))
    # tiny negative eigenvalues are clipped
    np.testing.assert_allclose(qcore.psd_sqrt(np.diag([1.0, -1e-12])), np.diag([1.0, 0.0]))


def test_eigendecomposition_round_trip(rng):
    for _ in range(20):
        g = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        h = g + g.conj().T
        w, v = np.linalg.eigh(h)
        np.testing.assert_allclose(v @ np.diag(w) @ v.conj().T, h, atol=1e-9)
        s = qcore.psd_sqrt(g @ g.conj().T)
        np.testing.assert_allclose(s @ s, g @ g.conj().T, atol=1e-9)


def test_expm_hermitian_against_pauli_closed_form():
    theta = 0.731
    u = qcore.expm_hermitian(qcore.SIGMA_X * theta / 2)
    np.testing.assert_allclose(u, np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * qcore.SIGMA_X,
                               atol=1e-15)


def test_validate_density_matrix():
    qcore.validate_density_matrix(np.eye(2) / 2)
    with pytest.raises(DomainError):
        qcore.validate_density_matrix(np.eye(2))
    with pytest.raises(DomainError):
        qcore.validate_density_matrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(NotPSDError):
        qcore.validate_density_matrix(np.diag([1.5, -0.5]))
    with pytest.raises(DomainError):
        qcore.validate_density_matrix(np.eye(3) / 3)
    with pytest.raises(DomainError):
        qcore.validate_density_matrix(np.array([[np.nan, 0], [0, 1]]))
    assert not qcore.is_density_matrix(np.eye(2))


def test_bloch_round_trip():
    r = np.array([0.3, -0.2, 0.5])
    np.testing.assert_allclose(qcore.bloch_vector(qcore.state_from_bloch(r)), r, atol=1e-15)
    np.testing.assert_allclose(qcore.bloch_vector(qcore.projector(qcore.ket("0"))), [0, 0, 1])
    with pytest.raises(DomainError):
        qcore.state_from_bloch([1, 1, 0])


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([2, 4, 8, 16]), st.integers(1, 4))
def test_random_density_matrices_are_valid(seed, dim, rank):
    rho = qcore.random_density_matrix(dim, np.random.default_rng(seed), rank=min(rank, dim))
    assert qcore.is_density_matrix(rho)
    assert np.linalg.matrix_rank(rho, tol=1e-10) <= min(rank, dim)
