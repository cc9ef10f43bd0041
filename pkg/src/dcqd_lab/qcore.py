"""Dense linear-algebra and state primitives shared by the rest of the package.

Conventions used throughout:

* Matrices are plain complex ``numpy.ndarray`` objects.
* Pauli operators are indexed 1..4 as ``1 -> identity, 2 -> X, 3 -> Y, 4 -> Z``
  in the public API; internal arrays use the corresponding 0-based position.
* Multi-qubit kets use big-endian ordering: the leftmost tensor factor (qubit 0)
  is the most significant bit of the computational-basis index.
"""
from functools import reduce
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DomainError, NotPSDError

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-12
PSD_ATOL = 1e-10

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

#: 0-based tuple ``(1, X, Y, Z)``; ``PAULIS[k - 1] == pauli(k)``.
PAULIS = (IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z)

BELL_LABELS = ("phi_plus", "psi_plus", "psi_minus", "phi_minus")

for _m in PAULIS:
    _m.setflags(write=False)


def pauli(index: int) -> np.ndarray:
    """Return the single-qubit Pauli operator with 1-based ``index``.

    :param index: 1 for identity, 2 for sigma_x, 3 for sigma_y, 4 for sigma_z.
    :raises DomainError: if ``index`` is not in 1..4.
    """
    if isinstance(index, bool) or not isinstance(index, (int, np.integer)) or not 1 <= index <= 4:
        raise DomainError(f"Pauli index must be an integer in 1..4, got {index!r}")
    return PAULIS[index - 1].copy()


def pauli_basis(num_qubits: int) -> list:
    """All ``4**num_qubits`` tensor products of Paulis.

    Element ``k`` has base-4 digits (most significant first) selecting the Pauli
    on each qubit, so for one qubit this is ``[1, X, Y, Z]``.
    """
    return [kron(*ops) for ops in product(PAULIS, repeat=num_qubits)]


def kron(*ops: np.ndarray) -> np.ndarray:
    """Tensor product of the given matrices or vectors, leftmost factor most significant."""
    if not ops:
        raise DomainError("kron needs at least one operand")
    return reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])


def ket(bits: str) -> np.ndarray:
    """Computational-basis vector for a bit string such as ``"01"``."""
    if not bits or set(bits) - {"0", "1"}:
        raise DomainError(f"not a bit string: {bits!r}")
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


def projector(vec: np.ndarray) -> np.ndarray:
    """Density matrix ``|v><v|`` of a (normalised on the fly) state vector."""
    vec = np.asarray(vec, dtype=complex).ravel()
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise DomainError("cannot build a projector from the zero vector")
    vec = vec / norm
    return np.outer(vec, vec.conj())


def bell_vector(index: int, table_convention: bool = False) -> np.ndarray:
    """State vector of the Bell state ``index`` in the order Phi+, Psi+, Psi-, Phi-.

    With ``table_convention`` the two Psi states carry an ``i`` on the ``|10>``
    component, ``(|01> +- i|10>)/sqrt(2)``, which is the basis mapped onto the
    computational basis by ``MS(pi/2, pi/4)``.
    """
    if isinstance(index, bool) or not isinstance(index, (int, np.integer)) or not 1 <= index <= 4:
        raise DomainError(f"Bell index must be an integer in 1..4, got {index!r}")
    phase = 1j if table_convention else 1.0
    if index == 1:
        v = ket("00") + ket("11")
    elif index == 2:
        v = ket("01") + phase * ket("10")
    elif index == 3:
        v = ket("01") - phase * ket("10")
    else:
        v = ket("00") - ket("11")
    return v / np.sqrt(2)


def bell_state(index: int, table_convention: bool = False) -> np.ndarray:
    """Density matrix of the Bell state ``index`` (see :func:`bell_vector`)."""
    return projector(bell_vector(index, table_convention))


def bell_projectors(table_convention: bool = False) -> list:
    """The four Bell projectors in the fixed order Phi+, Psi+, Psi-, Phi-."""
    return [bell_state(k, table_convention) for k in range(1, 5)]


def num_qubits_of(dim: int) -> int:
    n = int(round(np.log2(dim))) if dim > 0 else -1
    if n < 0 or 2 ** n != dim:
        raise DomainError(f"dimension {dim} is not a power of two")
    return n


def is_hermitian(m: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and bool(np.max(np.abs(m - m.conj().T)) <= atol)


def validate_density_matrix(rho: np.ndarray,
                            hermitian_atol: float = HERMITIAN_ATOL,
                            trace_atol: float = TRACE_ATOL,
                            psd_atol: float = PSD_ATOL) -> np.ndarray:
    """Check that ``rho`` is a qubit-register density matrix and return it as a complex array.

    :raises DomainError: wrong shape, non-finite entries, not Hermitian or not unit trace.
    :raises NotPSDError: an eigenvalue is below ``-psd_atol``.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DomainError(f"density matrix must be square, got shape {rho.shape}")
    num_qubits_of(rho.shape[0])
    if not np.all(np.isfinite(rho)):
        raise DomainError("density matrix has non-finite entries")
    if not is_hermitian(rho, hermitian_atol):
        raise DomainError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > trace_atol:
        raise DomainError(f"density matrix trace is {np.trace(rho).real:.3g}, expected 1")
    lo = np.linalg.eigvalsh(rho)[0]
    if lo < -psd_atol:
        raise NotPSDError(f"density matrix has eigenvalue {lo:.3g}")
    return rho


def is_density_matrix(rho: np.ndarray, **tolerances) -> bool:
    try:
        validate_density_matrix(rho, **tolerances)
    except (DomainError, NotPSDError):
        return False
    return True


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def partial_trace(state: np.ndarray, keep: Iterable[int], dims: Sequence[int] = None) -> np.ndarray:
    """Reduce ``state`` onto the subsystems listed in ``keep``.

    :param state: square matrix on a tensor-product space.
    :param keep: indices of subsystems to keep; kept subsystems stay in ascending order.
    :param dims: subsystem dimensions; defaults to all qubits.
    :raises DomainError: for an empty, duplicated or out-of-range ``keep``.
    """
    state = np.asarray(state, dtype=complex)
    if dims is None:
        dims = [2] * num_qubits_of(state.shape[0])
    dims = list(dims)
    if int(np.prod(dims)) != state.shape[0] or state.shape[0] != state.shape[1]:
        raise DomainError(f"dims {dims} do not match state of shape {state.shape}")
    keep = [int(k) for k in keep]
    n = len(dims)
    if len(set(keep)) != len(keep):
        raise DomainError(f"duplicated subsystem in {keep}")
    keep = sorted(keep)
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise DomainError(f"invalid subsystem set {keep} for {n} subsystems")
    traced = [k for k in range(n) if k not in keep]
    t = state.reshape(dims + dims)
    # Trace the highest index first so the remaining axis numbers stay valid.
    for count, k in enumerate(sorted(traced, reverse=True)):
        remaining = n - count
        t = np.trace(t, axis1=k, axis2=k + remaining)
    d = int(np.prod([dims[k] for k in keep]))
    return t.reshape(d, d)


def embed_operator(op: np.ndarray, targets: Sequence[int], num_qubits: int) -> np.ndarray:
    """Lift ``op`` acting on qubits ``targets`` (in that order) to the full register."""
    op = np.asarray(op, dtype=complex)
    targets = [int(t) for t in targets]
    k = len(targets)
    if op.shape != (2 ** k, 2 ** k):
        raise DomainError(f"operator of shape {op.shape} does not act on {k} qubits")
    if len(set(targets)) != k or min(targets) < 0 or max(targets) >= num_qubits:
        raise DomainError(f"invalid target qubits {targets} for a {num_qubits}-qubit register")
    if targets == list(range(num_qubits)):
        return op.copy()
    rest = [q for q in range(num_qubits) if q not in targets]
    full = np.kron(op, np.eye(2 ** len(rest)))
    # full acts on the ordering targets + rest; permute axes back to 0..n-1.
    order = targets + rest
    perm = np.argsort(order)
    t = full.reshape([2] * (2 * num_qubits))
    t = t.transpose(list(perm) + [num_qubits + p for p in perm])
    return t.reshape(2 ** num_qubits, 2 ** num_qubits)


def psd_sqrt(m: np.ndarray, atol: float = PSD_ATOL) -> np.ndarray:
    """Hermitian square root of a positive semidefinite matrix.

    Eigenvalues in ``[-atol, 0)`` are treated as zero.

    :raises NotPSDError: if an eigenvalue is below ``-atol``.
    """
    m = np.asarray(m, dtype=complex)
    h = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(h)
    if w[0] < -atol:
        raise NotPSDError(f"matrix has eigenvalue {w[0]:.3g} < {-atol:g}")
    w = np.sqrt(np.clip(w, 0, None))
    return (v * w) @ v.conj().T


def expm_hermitian(generator: np.ndarray, scale: complex = -1j) -> np.ndarray:
    """``exp(scale * H)`` for Hermitian ``H`` via its eigendecomposition."""
    h = np.asarray(generator, dtype=complex)
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    return (v * np.exp(scale * w)) @ v.conj().T


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """Bloch vector ``(<X>, <Y>, <Z>)`` of a single-qubit state."""
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise DomainError("Bloch vectors are defined for single-qubit states only")
    return np.real([np.trace(rho @ p) for p in PAULIS[1:]])


def state_from_bloch(r: Sequence[float]) -> np.ndarray:
    """Single-qubit density matrix with Bloch vector ``r`` (``|r| <= 1``)."""
    x, y, z = r
    if x * x + y * y + z * z > 1 + 1e-12:
        raise DomainError(f"Bloch vector {tuple(r)} lies outside the unit ball")
    return (IDENTITY + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z) / 2


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int = None) -> np.ndarray:
    """Random state from the Ginibre ensemble; handy for tests and demos."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)
