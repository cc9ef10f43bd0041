"""Quantum channels: Kraus and process-matrix (chi) forms, gates, and the damping library.

The process matrix ``chi`` expands a channel in the Pauli basis,
``E(rho) = sum_mn chi[m, n] P_m rho P_n^dagger``, with ``P`` the (tensor
products of) Paulis ordered ``1, X, Y, Z`` as in :func:`dcqd_lab.qcore.pauli_basis`.

The Choi state is ``(E x 1)|Phi+><Phi+|`` with the channel output as the first
tensor factor and the reference copy as the second.
"""
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import qcore
from .exceptions import DomainError, PhysicalityError

COMPLETENESS_ATOL = 1e-9
CHI_HERMITIAN_ATOL = 1e-10
CHI_PSD_ATOL = 1e-10
TP_ATOL = 1e-9


# ----------------------------------------------------------------------------------------------
# Gate unitaries


def collective_rotation(theta: float, phi: float, num_qubits: int = 1) -> np.ndarray:
    """``U(theta, phi) = exp(-i theta/2 sum_i [sin(phi) Y_i + cos(phi) X_i])``."""
    gen = _collective_axis(phi, num_qubits)
    return qcore.expm_hermitian(gen, -0.5j * theta)


def ms_unitary(theta: float, phi: float, num_qubits: int = 2) -> np.ndarray:
    """Molmer-Sorensen gate ``exp(-i theta/4 [sum_i sin(phi) Y_i + cos(phi) X_i]^2)``."""
    s = _collective_axis(phi, num_qubits)
    return qcore.expm_hermitian(s @ s, -0.25j * theta)


def z_rotation(theta: float, target: int = 0, num_qubits: int = 1) -> np.ndarray:
    """Addressed rotation ``U_Z(theta) = exp(-i theta/2 Z)`` on qubit ``target`` (0-based)."""
    rz = np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
    return qcore.embed_operator(rz, [target], num_qubits)


def _collective_axis(phi: float, num_qubits: int) -> np.ndarray:
    axis = np.sin(phi) * qcore.SIGMA_Y + np.cos(phi) * qcore.SIGMA_X
    return sum(qcore.embed_operator(axis, [k], num_qubits) for k in range(num_qubits))


# ----------------------------------------------------------------------------------------------
# Kraus channels


@dataclass(frozen=True)
class KrausChannel:
    """A channel ``rho -> sum_k K_k rho K_k^dagger`` on ``num_qubits`` qubits."""

    num_qubits: int
    kraus_ops: tuple

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus_ops)
        d = 2 ** self.num_qubits
        if not ops:
            raise DomainError("a Kraus channel needs at least one operator")
        for k in ops:
            if k.shape != (d, d):
                raise DomainError(f"Kraus operator of shape {k.shape} on {self.num_qubits} qubit(s)")
            if not np.all(np.isfinite(k)):
                raise DomainError("Kraus operator has non-finite entries")
            k.setflags(write=False)
        resid = np.max(np.abs(sum(k.conj().T @ k for k in ops) - np.eye(d)))
        if resid > COMPLETENESS_ATOL:
            raise DomainError(f"Kraus operators are not complete (residual {resid:.3g})")
        object.__setattr__(self, "kraus_ops", ops)

    @classmethod
    def from_unitary(cls, u: np.ndarray) -> "KrausChannel":
        u = np.asarray(u, dtype=complex)
        return cls(qcore.num_qubits_of(u.shape[0]), (u,))

    def __call__(self, state: np.ndarray, acting_on: Sequence[int] = None) -> np.ndarray:
        return apply(self, state, acting_on)


def identity_channel(num_qubits: int = 1) -> KrausChannel:
    return KrausChannel(num_qubits, (np.eye(2 ** num_qubits),))


def random_channel(rng: np.random.Generator, num_qubits: int = 1, rank: int = None) -> KrausChannel:
    """Random CPTP map with ``rank`` Kraus operators, from a random Stinespring isometry."""
    d = 2 ** num_qubits
    rank = d * d if rank is None else rank
    g = rng.normal(size=(rank * d, d)) + 1j * rng.normal(size=(rank * d, d))
    v, _ = np.linalg.qr(g)
    return KrausChannel(num_qubits, [v[k * d:(k + 1) * d] for k in range(rank)])


def amplitude_damping_kraus(p: float, ground: int = 1) -> list:
    """Decay with probability ``p`` from the excited state to ``|ground>``.

    The default ``ground=1`` matches an encoding where ``|1>`` is the lower level.
    """
    g, e = ground, 1 - ground
    k0 = np.zeros((2, 2), dtype=complex)
    k0[g, g] = 1.0
    k0[e, e] = np.sqrt(1 - p)
    k1 = np.zeros((2, 2), dtype=complex)
    k1[g, e] = np.sqrt(p)
    return [k0, k1]


def phase_damping_kraus(p: float) -> list:
    """Dephasing that multiplies the coherences by ``1 - p``."""
    return [np.sqrt(1 - p / 2) * qcore.IDENTITY, np.sqrt(p / 2) * qcore.SIGMA_Z]


def collective_dephasing_kraus(t: float, T2: float, num_qubits: int) -> list:
    """Correlated dephasing of ``num_qubits`` qubits.

    Entry ``rho[x, y]`` is multiplied by ``exp(-(t/T2) (w_x - w_y)^2)`` where ``w`` is the
    Hamming weight, so a single-qubit coherence decays as ``exp(-t/T2)`` and the
    ``|0..0><1..1|`` coherence of N qubits as ``exp(-N^2 t/T2)``.  This is the channel of a
    Gaussian-distributed common phase shift, built from the eigenvectors of the
    (positive semidefinite) Gaussian-kernel multiplier.
    """
    d = 2 ** num_qubits
    w = np.array([bin(x).count("1") for x in range(d)], dtype=float)
    rate = 0.0 if np.isinf(T2) else t / T2
    mult = np.exp(-rate * (w[:, None] - w[None, :]) ** 2)
    lam, vec = np.linalg.eigh(mult)
    keep = lam > 1e-14 * d
    return [np.diag(np.sqrt(l) * v).astype(complex) for l, v in zip(lam[keep], vec[:, keep].T)]


def thermalization_kraus(t: float, T1: float, T2: float, a0: float, ground: int = 0) -> list:
    """Single-qubit relaxation toward the equilibrium population ``a0`` of ``|ground>``.

    With ``ground=0``: ``rho00(t) = (rho00 - a0) e^{-t/T1} + a0`` and
    ``rho01(t) = rho01 e^{-t/T2}``.
    """
    if T2 > 2 * T1 * (1 + 1e-12):
        raise PhysicalityError(f"T2={T2} exceeds 2*T1={2 * T1}")
    e1 = 0.0 if np.isinf(t / T1) else np.exp(-t / T1)
    e2 = np.exp(-t / T2)
    g, e = ground, 1 - ground

    def action(op):
        # Linear (trace-weighted) extension of the population/coherence update.
        out = np.zeros((2, 2), dtype=complex)
        tr = op[0, 0] + op[1, 1]
        out[g, g] = (op[g, g] - a0 * tr) * e1 + a0 * tr
        out[e, e] = tr - out[g, g]
        out[g, e] = op[g, e] * e2
        out[e, g] = op[e, g] * e2
        return out

    return kraus_from_action(action, 2)


def kraus_from_action(action: Callable[[np.ndarray], np.ndarray], dim: int,
                      tol: float = 1e-13) -> list:
    """Kraus operators of the linear CP map given by its action on matrices.

    Builds the (unnormalised) Choi matrix ``sum_ij action(|i><j|) x |i><j|`` and splits
    it into rank-one terms.
    """
    choi = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            eij = np.zeros((dim, dim), dtype=complex)
            eij[i, j] = 1.0
            choi += np.kron(action(eij), eij)
    return _kraus_from_choi(choi, dim, tol)


def _kraus_from_choi(choi: np.ndarray, dim: int, tol: float) -> list:
    """Split an unnormalised Choi matrix (output factor first) into Kraus operators."""
    lam, vec = np.linalg.eigh((choi + choi.conj().T) / 2)
    if lam[0] < -1e-9:
        raise DomainError(f"map is not completely positive (Choi eigenvalue {lam[0]:.3g})")
    ops = [np.sqrt(l) * v.reshape(dim, dim) for l, v in zip(lam, vec.T) if l > tol]
    return ops


# ----------------------------------------------------------------------------------------------
# Channel specifications


_SPEC_PARAMS = {
    "identity": ((), {}),
    "rotation": (("theta", "phi"), {}),
    "z_rotation": (("theta",), {}),
    "ms_gate": (("theta", "phi"), {}),
    "amplitude_damping": (("p",), {"ground": 1}),
    "phase_damping": (("p",), {}),
    "collective_dephasing": (("t", "T2", "N"), {}),
    "thermalization": (("t", "T1", "T2", "a0"), {"ground": 0}),
    "crosstalk": (("epsilon",), {"phi": 0.0}),
}

CHANNEL_KINDS = tuple(_SPEC_PARAMS)


@dataclass(frozen=True)
class ChannelSpec:
    """Parameterised description of one entry of the channel library.

    ``ChannelSpec("rotation", {"theta": np.pi, "phi": 0.0})`` or, equivalently,
    ``ChannelSpec.of("rotation", theta=np.pi, phi=0.0)``.  Angles are in radians and
    times in seconds (any consistent unit works).
    """

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _SPEC_PARAMS:
            raise DomainError(f"unknown channel kind {self.kind!r}; expected one of {CHANNEL_KINDS}")
        required, optional = _SPEC_PARAMS[self.kind]
        params = dict(optional)
        params.update(self.params)
        unknown = set(params) - set(required) - set(optional)
        missing = set(required) - set(params)
        if unknown:
            raise DomainError(f"{self.kind}: unknown parameter(s) {sorted(unknown)}")
        if missing:
            raise DomainError(f"{self.kind}: missing parameter(s) {sorted(missing)}")
        for name, value in params.items():
            if not isinstance(value, (int, float, np.integer, np.floating)) or isinstance(value, bool):
                raise DomainError(f"{self.kind}: parameter {name} must be a number, got {value!r}")
            if np.isnan(value):
                raise DomainError(f"{self.kind}: parameter {name} is NaN")
        _check_ranges(self.kind, params)
        object.__setattr__(self, "params", params)

    @classmethod
    def of(cls, kind: str, **params) -> "ChannelSpec":
        return cls(kind, params)

    @property
    def num_qubits(self) -> int:
        if self.kind == "ms_gate":
            return 2
        if self.kind == "collective_dephasing":
            return int(self.params["N"])
        return 1

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: float(v) for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ChannelSpec":
        doc = dict(doc)
        if "kind" not in doc:
            raise DomainError("channel document has no 'kind'")
        kind = doc.pop("kind")
        return cls(kind, doc)


def _check_ranges(kind: str, params: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise DomainError(f"{kind}: {msg}")

    if "p" in params:
        need(0 <= params["p"] <= 1, "probability p must lie in [0, 1]")
    if "a0" in params:
        need(0 <= params["a0"] <= 1, "a0 must lie in [0, 1]")
    if "ground" in params:
        need(params["ground"] in (0, 1), "ground must be 0 or 1")
    if "t" in params:
        need(params["t"] >= 0 and np.isfinite(params["t"]) or params["t"] == np.inf,
             "time t must be non-negative")
    for name in ("T1", "T2"):
        if name in params:
            need(params[name] > 0, f"{name} must be positive")
    if "N" in params:
        need(float(params["N"]).is_integer() and 1 <= params["N"] <= 4, "N must be an integer in 1..4")
    for name in ("theta", "phi", "epsilon"):
        if name in params:
            need(np.isfinite(params[name]), f"{name} must be finite")
    if kind == "thermalization" and params["T2"] > 2 * params["T1"] * (1 + 1e-12):
        raise PhysicalityError(f"thermalization: T2={params['T2']} > 2*T1={2 * params['T1']}")


def build_channel(spec: ChannelSpec) -> KrausChannel:
    """Kraus form of a :class:`ChannelSpec`."""
    k, p = spec.kind, spec.params
    if k == "identity":
        return identity_channel(1)
    if k == "rotation":
        return KrausChannel.from_unitary(collective_rotation(p["theta"], p["phi"], 1))
    if k == "z_rotation":
        return KrausChannel.from_unitary(z_rotation(p["theta"]))
    if k == "ms_gate":
        return KrausChannel.from_unitary(ms_unitary(p["theta"], p["phi"], 2))
    if k == "amplitude_damping":
        return KrausChannel(1, amplitude_damping_kraus(p["p"], int(p["ground"])))
    if k == "phase_damping":
        return KrausChannel(1, phase_damping_kraus(p["p"]))
    if k == "collective_dephasing":
        n = int(p["N"])
        return KrausChannel(n, collective_dephasing_kraus(p["t"], p["T2"], n))
    if k == "thermalization":
        return KrausChannel(1, thermalization_kraus(p["t"], p["T1"], p["T2"], p["a0"], int(p["ground"])))
    if k == "crosstalk":
        return KrausChannel.from_unitary(collective_rotation(p["epsilon"], p["phi"], 1))
    raise AssertionError(k)  # pragma: no cover


def apply(channel: KrausChannel, state: np.ndarray, acting_on: Sequence[int] = None) -> np.ndarray:
    """Apply ``channel`` to the qubits ``acting_on`` of ``state`` (identity elsewhere).

    :raises DomainError: if the channel size and ``acting_on`` disagree or the state is invalid.
    """
    state = qcore.validate_density_matrix(state)
    n = qcore.num_qubits_of(state.shape[0])
    acting_on = list(range(channel.num_qubits)) if acting_on is None else [int(q) for q in acting_on]
    if len(acting_on) != channel.num_qubits:
        raise DomainError(f"{channel.num_qubits}-qubit channel cannot act on qubits {acting_on}")
    out = np.zeros_like(state)
    for k in channel.kraus_ops:
        full = qcore.embed_operator(k, acting_on, n)
        out += full @ state @ full.conj().T
    out = (out + out.conj().T) / 2
    return qcore.validate_density_matrix(out, trace_atol=1e-10)


# ----------------------------------------------------------------------------------------------
# Process matrices


@dataclass(frozen=True)
class ProcessMatrix:
    """Pauli-basis process matrix of an ``num_qubits``-qubit map.

    Construction only checks shape and finiteness, so that unconstrained estimates
    (e.g. from linear inversion) can be represented; use :meth:`validate` or
    :attr:`is_cptp` to check physicality.
    """

    chi: np.ndarray
    num_qubits: int = None

    def __post_init__(self):
        chi = np.array(self.chi, dtype=complex)
        if chi.ndim != 2 or chi.shape[0] != chi.shape[1]:
            raise DomainError(f"chi must be square, got shape {chi.shape}")
        n = qcore.num_qubits_of(int(round(np.sqrt(chi.shape[0])))) if chi.shape[0] > 1 else -1
        if n < 1 or 4 ** n != chi.shape[0]:
            raise DomainError(f"chi of shape {chi.shape} is not 4^n x 4^n")
        if self.num_qubits is not None and self.num_qubits != n:
            raise DomainError(f"chi shape {chi.shape} does not match num_qubits={self.num_qubits}")
        if not np.all(np.isfinite(chi)):
            raise DomainError("chi has non-finite entries")
        chi.setflags(write=False)
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "num_qubits", n)

    @property
    def dim(self) -> int:
        return 2 ** self.num_qubits

    @property
    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.chi - self.chi.conj().T)))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.chi + self.chi.conj().T) / 2)[0])

    @property
    def tp_residual(self) -> float:
        """Max entry of ``sum_mn chi_mn P_n^dagger P_m - 1``."""
        basis = qcore.pauli_basis(self.num_qubits)
        acc = sum(self.chi[m, n] * basis[n].conj().T @ basis[m]
                  for m in range(len(basis)) for n in range(len(basis)))
        return float(np.max(np.abs(acc - np.eye(self.dim))))

    @property
    def is_psd(self) -> bool:
        return self.min_eigenvalue >= -CHI_PSD_ATOL

    @property
    def is_cptp(self) -> bool:
        return (self.hermiticity_residual <= CHI_HERMITIAN_ATOL and self.is_psd
                and self.tp_residual <= TP_ATOL)

    def validate(self) -> "ProcessMatrix":
        if self.hermiticity_residual > CHI_HERMITIAN_ATOL:
            raise DomainError(f"chi is not Hermitian (residual {self.hermiticity_residual:.3g})")
        if not self.is_psd:
            raise DomainError(f"chi is not positive semidefinite (eigenvalue {self.min_eigenvalue:.3g})")
        if self.tp_residual > TP_ATOL:
            raise DomainError(f"chi is not trace preserving (residual {self.tp_residual:.3g})")
        return self

    def choi(self) -> np.ndarray:
        return chi_to_choi(self)

    def kraus(self) -> KrausChannel:
        return chi_to_kraus(self)

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return apply_chi(self, state)

    @classmethod
    def from_kraus(cls, channel: KrausChannel) -> "ProcessMatrix":
        return kraus_to_chi(channel)

    @classmethod
    def from_spec(cls, spec: ChannelSpec) -> "ProcessMatrix":
        return kraus_to_chi(build_channel(spec))


def pauli_change_of_basis(num_qubits: int) -> np.ndarray:
    """Unitary whose column ``m`` is the row-major vectorisation of ``P_m / sqrt(d)``."""
    d = 2 ** num_qubits
    return np.column_stack([p.reshape(-1) for p in qcore.pauli_basis(num_qubits)]) / np.sqrt(d)


def kraus_to_chi(channel: KrausChannel) -> ProcessMatrix:
    """``chi_mn = sum_k a_km conj(a_kn)`` for ``K_k = sum_m a_km P_m``."""
    n = channel.num_qubits
    d = 2 ** n
    basis = qcore.pauli_basis(n)
    coeffs = np.array([[np.trace(p.conj().T @ k) / d for p in basis] for k in channel.kraus_ops])
    chi = coeffs.T @ coeffs.conj()
    return ProcessMatrix((chi + chi.conj().T) / 2)


def chi_to_kraus(chi: ProcessMatrix, tol: float = 1e-13) -> KrausChannel:
    """Kraus form of a CPTP process matrix via its eigendecomposition."""
    basis = qcore.pauli_basis(chi.num_qubits)
    lam, vec = np.linalg.eigh((chi.chi + chi.chi.conj().T) / 2)
    if lam[0] < -CHI_PSD_ATOL:
        raise DomainError(f"chi is not positive semidefinite (eigenvalue {lam[0]:.3g})")
    ops = [np.sqrt(l) * sum(u * p for u, p in zip(v, basis)) for l, v in zip(lam, vec.T) if l > tol]
    return KrausChannel(chi.num_qubits, ops)


def apply_chi(chi: ProcessMatrix, state: np.ndarray) -> np.ndarray:
    """``sum_mn chi_mn P_m rho P_n^dagger``; works for non-physical chi too."""
    basis = qcore.pauli_basis(chi.num_qubits)
    state = np.asarray(state, dtype=complex)
    left = [p @ state for p in basis]
    return sum(chi.chi[m, n] * left[m] @ basis[n].conj().T
               for m in range(len(basis)) for n in range(len(basis)))


def chi_to_choi(chi: ProcessMatrix) -> np.ndarray:
    """Unit-trace Choi state ``(E x 1)|Phi+><Phi+|`` of a process matrix."""
    b = pauli_change_of_basis(chi.num_qubits)
    j = b @ chi.chi @ b.conj().T
    return (j + j.conj().T) / 2


def choi_to_chi(choi: np.ndarray) -> ProcessMatrix:
    """Inverse of :func:`chi_to_choi` for a unit-trace Choi state."""
    choi = np.asarray(choi, dtype=complex)
    n = qcore.num_qubits_of(choi.shape[0]) // 2
    b = pauli_change_of_basis(n)
    chi = b.conj().T @ choi @ b
    return ProcessMatrix((chi + chi.conj().T) / 2)


def unitary_chi(u: np.ndarray) -> ProcessMatrix:
    return kraus_to_chi(KrausChannel.from_unitary(u))


# ----------------------------------------------------------------------------------------------
# Bloch-ellipsoid picture


def sphere_points(resolution: int) -> np.ndarray:
    """``resolution**2`` unit vectors on a polar/azimuthal grid (poles included)."""
    theta = np.linspace(0, np.pi, resolution)
    phi = np.linspace(0, 2 * np.pi, resolution, endpoint=False)
    t, f = np.meshgrid(theta, phi, indexing="ij")
    return np.column_stack([(np.sin(t) * np.cos(f)).ravel(), (np.sin(t) * np.sin(f)).ravel(),
                            np.cos(t).ravel()])


def bloch_map(chi: ProcessMatrix, points: np.ndarray) -> np.ndarray:
    """Bloch vectors of the images of the states with Bloch vectors ``points``."""
    if chi.num_qubits != 1:
        raise DomainError("the Bloch picture is only defined for single-qubit processes")
    return np.array([qcore.bloch_vector(apply_chi(chi, qcore.state_from_bloch(r)))
                     for r in np.atleast_2d(points)])


def bloch_ellipsoid(chi: ProcessMatrix, resolution: int = 16) -> list:
    """Pairs ``(input, output)`` of Bloch vectors for ``resolution**2`` sphere samples."""
    if chi.num_qubits != 1:
        raise DomainError("the Bloch picture is only defined for single-qubit processes")
    if resolution < 4:
        raise DomainError(f"resolution must be >= 4, got {resolution}")
    pts = sphere_points(resolution)
    out = bloch_map(chi, pts)
    return list(zip(pts, out))


AXIS_POINTS = {"+x": (1, 0, 0), "-x": (-1, 0, 0), "+y": (0, 1, 0), "-y": (0, -1, 0),
               "+z": (0, 0, 1), "-z": (0, 0, -1)}


def bloch_axes(chi: ProcessMatrix) -> dict:
    """Images of the six Bloch-sphere poles, keyed ``"+x"``, ``"-x"``, ..."""
    pts = np.array(list(AXIS_POINTS.values()), dtype=float)
    return dict(zip(AXIS_POINTS, bloch_map(chi, pts)))
