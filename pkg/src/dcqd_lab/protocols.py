"""Tomography pipelines: standard QPT, ancilla-assisted DCQD and the single-setting GM.

Every protocol is described by a :class:`LambdaMatrix`, the linear map from the
flattened process matrix ``chi`` to the outcome probabilities of all of its
configurations.  Row order is configuration-major; columns follow ``chi.ravel()``.

Register conventions:

* DCQD: two qubits ``(S, A)``; the process acts on qubit 0.
* GM: four ions in chain order ``(A1, S, A3, A2)``; the process acts on ion 1 and the
  pairwise Bell measurement is on the pairs ``(A1, A3)`` and ``(S, A2)``.
"""
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from . import _rng, qcore
from .channels import (KrausChannel, ProcessMatrix, apply, apply_chi, collective_rotation, ms_unitary,
                       pauli_change_of_basis, z_rotation)
from .exceptions import ConstructionError, DegenerateConfigurationError, DomainError

DEFAULT_ALPHA = np.cos(3 * np.pi / 8)
DEFAULT_BETA = np.exp(0.5j * np.pi) * np.sin(3 * np.pi / 8)

DET_ATOL = 1e-12
GM_MAX_CONDITION = 1e3

#: Bell outcome -> two-ion detection pattern after ``MS(pi/2, pi/4)`` (i-phase Bell states).
BSM_OUTCOME_BITS = {"phi_plus": "11", "psi_plus": "01", "psi_minus": "10", "phi_minus": "00"}


# ----------------------------------------------------------------------------------------------
# Data records


@dataclass(frozen=True)
class ProbeSet:
    """The four two-qubit DCQD input states (system qubit first)."""

    states: tuple
    alpha: complex
    beta: complex

    def __post_init__(self):
        if len(self.states) != 4:
            raise DomainError("a probe set has exactly four states")
        for rho in self.states:
            qcore.validate_density_matrix(rho)
            if qcore.purity(rho) < 1 - 1e-10:
                raise DomainError("probe states must be pure")
        if abs(abs(self.alpha) ** 2 + abs(self.beta) ** 2 - 1) > 1e-12:
            raise DomainError("|alpha|^2 + |beta|^2 must equal 1")


@dataclass(frozen=True)
class CountRecord:
    """Outcome counts of one experimental configuration."""

    configuration_id: str
    outcome_counts: Mapping[str, int]
    shots: int

    def __post_init__(self):
        counts = {str(k): int(v) for k, v in self.outcome_counts.items()}
        if any(v < 0 for v in counts.values()):
            raise DomainError("counts must be non-negative")
        if sum(counts.values()) != self.shots:
            raise DomainError(f"counts sum to {sum(counts.values())}, expected {self.shots} shots")
        object.__setattr__(self, "outcome_counts", counts)

    def as_array(self, labels: Sequence[str]) -> np.ndarray:
        extra = set(self.outcome_counts) - set(labels)
        if extra:
            raise DomainError(f"configuration {self.configuration_id}: unknown outcomes {sorted(extra)}")
        return np.array([self.outcome_counts.get(l, 0) for l in labels], dtype=float)

    def to_dict(self) -> dict:
        return {"configuration_id": self.configuration_id, "shots": self.shots,
                "outcome_counts": dict(self.outcome_counts)}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CountRecord":
        return cls(str(doc["configuration_id"]), dict(doc["outcome_counts"]), int(doc["shots"]))


@dataclass(frozen=True)
class LambdaMatrix:
    """Linear measurement model ``p = matrix @ chi.ravel()``.

    :ivar configurations: ``(configuration_id, outcome_labels)`` per configuration, in row order.
    """

    matrix: np.ndarray
    configurations: tuple
    num_qubits: int = 1
    condition_number: float = field(init=False)
    determinant: complex = field(init=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        rows = sum(len(labels) for _, labels in self.configurations)
        if rows != m.shape[0] or m.shape[1] != 16 ** self.num_qubits:
            raise DomainError(f"Lambda of shape {m.shape} does not match its configurations")
        object.__setattr__(self, "condition_number", float(np.linalg.cond(m)))
        det = complex(np.linalg.det(m)) if m.shape[0] == m.shape[1] else complex("nan")
        object.__setattr__(self, "determinant", det)

    @property
    def configuration_ids(self) -> list:
        return [cid for cid, _ in self.configurations]

    def slices(self) -> list:
        out, start = [], 0
        for _, labels in self.configurations:
            out.append(slice(start, start + len(labels)))
            start += len(labels)
        return out

    def probabilities(self, chi: ProcessMatrix) -> np.ndarray:
        """Flat outcome probabilities of all configurations (real part)."""
        p = self.matrix @ chi.chi.ravel()
        return p.real

    def split(self, flat: np.ndarray) -> list:
        return [np.asarray(flat)[s] for s in self.slices()]

    def count_vector(self, counts: Sequence[CountRecord]) -> np.ndarray:
        """Counts aligned with the rows of ``matrix``."""
        by_id = {c.configuration_id: c for c in counts}
        missing = [cid for cid in self.configuration_ids if cid not in by_id]
        if missing:
            raise DomainError(f"no counts for configuration(s) {missing}")
        return np.concatenate([by_id[cid].as_array(labels) for cid, labels in self.configurations])

    def frequencies(self, counts: Sequence[CountRecord]) -> np.ndarray:
        n = self.count_vector(counts)
        parts = self.split(n)
        return np.concatenate([q / max(q.sum(), 1) for q in parts])

    def choi_effects(self) -> np.ndarray:
        """Operators ``W_r`` with ``p_r = Tr(C W_r)`` for the Choi matrix ``C = d * choi``.

        ``C`` has unit partial trace over the output factor for trace-preserving maps.
        """
        d = 2 ** self.num_qubits
        b = pauli_change_of_basis(self.num_qubits)
        lr = self.matrix.reshape(-1, d * d, d * d)
        w = np.einsum("ij,rkj,lk->ril", b, lr, b.conj()) / d
        return (w + np.conj(np.swapaxes(w, 1, 2))) / 2


def lambda_from_settings(settings: Sequence, system_qubit: int, num_register_qubits: int) -> LambdaMatrix:
    """Build the measurement model of a single-qubit process embedded in a register.

    :param settings: ``(configuration_id, input_state, effects, outcome_labels)`` tuples,
        with ``input_state`` and ``effects`` on the whole register.
    :param system_qubit: register index the process acts on.
    """
    sig = [qcore.embed_operator(p, [system_qubit], num_register_qubits) for p in qcore.PAULIS]
    rows, configs = [], []
    for cid, rho, effects, labels in settings:
        rho = np.asarray(rho, dtype=complex)
        # T[m, n] = S_m rho S_n^dagger
        left = np.einsum("mab,bc->mac", sig, rho)
        t = np.einsum("mac,ndc->mnad", left, np.conj(sig))
        eff = np.asarray(effects, dtype=complex)
        rows.append(np.einsum("rda,mnad->rmn", eff, t).reshape(len(eff), 16))
        configs.append((str(cid), tuple(labels)))
    return LambdaMatrix(np.vstack(rows), tuple(configs), 1)


# ----------------------------------------------------------------------------------------------
# DCQD


def prepare_probes(alpha: complex = DEFAULT_ALPHA, beta: complex = DEFAULT_BETA) -> ProbeSet:
    """The four DCQD input states built from amplitudes ``alpha`` and ``beta``.

    ``psi1 = Phi+``, ``psi2 = a|00> + b|11>``, ``psi3 = a|++>_x - b|-->_x`` and
    ``psi4 = a|++>_y - b|-->_y``.

    :raises DomainError: if ``|alpha|^2 + |beta|^2 != 1``.
    """
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > 1e-12:
        raise DomainError(f"|alpha|^2 + |beta|^2 = {abs(alpha) ** 2 + abs(beta) ** 2}, expected 1")
    r2 = np.sqrt(2)
    xp, xm = (qcore.ket("0") + qcore.ket("1")) / r2, (qcore.ket("0") - qcore.ket("1")) / r2
    yp, ym = (qcore.ket("0") + 1j * qcore.ket("1")) / r2, (qcore.ket("0") - 1j * qcore.ket("1")) / r2
    kets = [
        qcore.bell_vector(1),
        alpha * qcore.ket("00") + beta * qcore.ket("11"),
        alpha * np.kron(xp, xp) - beta * np.kron(xm, xm),
        alpha * np.kron(yp, yp) - beta * np.kron(ym, ym),
    ]
    return ProbeSet(tuple(qcore.projector(v) for v in kets), complex(alpha), complex(beta))


def bsm_probabilities(state: np.ndarray, table_convention: bool = False) -> np.ndarray:
    """Bell-measurement outcome probabilities in the order Phi+, Psi+, Psi-, Phi-.

    ``table_convention`` selects the ``|01> +- i|10>`` form of Psi+- that the MS-gate
    readout resolves; Phi+-, and the sum of the two Psi outcomes, are the same either way.
    """
    state = qcore.validate_density_matrix(state, trace_atol=1e-10)
    if state.shape != (4, 4):
        raise DomainError("a Bell-state measurement needs a two-qubit state")
    return np.array([np.trace(p @ state).real for p in qcore.bell_projectors(table_convention)])


def dcqd_configuration_ids() -> tuple:
    return tuple(f"rho{j}" for j in range(1, 5))


def build_lambda(probes: ProbeSet, projectors: Sequence[np.ndarray] = None) -> LambdaMatrix:
    """DCQD measurement model ``Tr(P_i (S_m x 1) rho_j (S_n x 1)^dagger)``.

    Rows are ordered ``4*j + i`` (probe ``j``, Bell outcome ``i``).

    :raises DegenerateConfigurationError: if ``|det| < 1e-12``.
    """
    projectors = qcore.bell_projectors() if projectors is None else list(projectors)
    if len(projectors) != 4:
        raise DomainError("DCQD needs exactly four Bell projectors")
    settings = [(cid, rho, projectors, qcore.BELL_LABELS)
                for cid, rho in zip(dcqd_configuration_ids(), probes.states)]
    lam = lambda_from_settings(settings, 0, 2)
    if not abs(lam.determinant) >= DET_ATOL:
        raise DegenerateConfigurationError(f"|det Lambda| = {abs(lam.determinant):.3g} < {DET_ATOL:g}")
    return lam


def dcqd_probabilities(chi: ProcessMatrix, probes: ProbeSet = None) -> np.ndarray:
    """Table ``p[i, j]`` of Bell outcome ``i`` for probe ``j`` through the measurement model."""
    if chi.num_qubits != 1:
        raise DomainError("DCQD characterises single-qubit processes")
    probes = prepare_probes() if probes is None else probes
    return build_lambda(probes).probabilities(chi).reshape(4, 4).T


def dcqd_probabilities_direct(channel: KrausChannel, probes: ProbeSet = None,
                              crosstalk: KrausChannel = None) -> np.ndarray:
    """Same table as :func:`dcqd_probabilities` by simulating each configuration.

    ``crosstalk`` is an optional single-qubit channel applied to the ancilla alongside the
    process (residual addressing light); it is not part of the measurement model.
    """
    probes = prepare_probes() if probes is None else probes
    cols = []
    for rho in probes.states:
        out = apply(channel, rho, [0])
        if crosstalk is not None:
            out = apply(crosstalk, out, [1])
        cols.append(bsm_probabilities(out))
    return np.column_stack(cols)


# ----------------------------------------------------------------------------------------------
# Standard QPT


SQPT_INPUT_LABELS = ("0", "1", "+x", "+y")
SQPT_BASES = ("x", "y", "z")


def _sqpt_inputs() -> list:
    r2 = np.sqrt(2)
    vecs = [qcore.ket("0"), qcore.ket("1"), (qcore.ket("0") + qcore.ket("1")) / r2,
            (qcore.ket("0") + 1j * qcore.ket("1")) / r2]
    return [qcore.projector(v) for v in vecs]


def _sqpt_effects(basis: str) -> list:
    pauli = {"x": qcore.SIGMA_X, "y": qcore.SIGMA_Y, "z": qcore.SIGMA_Z}[basis]
    return [(qcore.IDENTITY + pauli) / 2, (qcore.IDENTITY - pauli) / 2]


def sqpt_lambda() -> LambdaMatrix:
    """Measurement model of the 4 inputs x 3 bases configurations (24 x 16)."""
    settings = [(f"{lab}|{b}", rho, _sqpt_effects(b), ("+", "-"))
                for lab, rho in zip(SQPT_INPUT_LABELS, _sqpt_inputs()) for b in SQPT_BASES]
    return lambda_from_settings(settings, 0, 1)


def sqpt_probabilities(chi: ProcessMatrix) -> np.ndarray:
    """Array ``p[input, basis, outcome]`` (outcome 0 is the +1 eigenstate) by direct application."""
    if chi.num_qubits != 1:
        raise DomainError("standard QPT here characterises single-qubit processes")
    out = np.empty((4, 3, 2))
    for a, rho in enumerate(_sqpt_inputs()):
        rho_out = apply_chi(chi, rho)
        for b, basis in enumerate(SQPT_BASES):
            out[a, b] = [np.trace(e @ rho_out).real for e in _sqpt_effects(basis)]
    return out


# ----------------------------------------------------------------------------------------------
# Generalized measurement (single setting)


GM_REGISTER = ("A1", "S", "A3", "A2")
GM_SYSTEM = 1
GM_FIXTURE = "gm_circuit.json"
GM_FIXTURE_VERSION = 1


def gate_unitary(gate: Mapping, num_qubits: int) -> np.ndarray:
    """Unitary of one gate record ``{"gate": "rotation"|"ms"|"z", ...}`` on the register.

    ``target`` of a ``z`` gate is the 1-based ion number.
    """
    name = gate.get("gate")
    if name == "rotation":
        return collective_rotation(gate["theta"], gate["phi"], num_qubits)
    if name == "ms":
        return ms_unitary(gate["theta"], gate["phi"], num_qubits)
    if name == "z":
        target = int(gate["target"])
        if not 1 <= target <= num_qubits:
            raise DomainError(f"z gate target {target} outside 1..{num_qubits}")
        return z_rotation(gate["theta"], target - 1, num_qubits)
    raise DomainError(f"unknown gate {name!r}")


def circuit_unitary(gates: Sequence[Mapping], num_qubits: int) -> np.ndarray:
    u = np.eye(2 ** num_qubits, dtype=complex)
    for g in gates:
        u = gate_unitary(g, num_qubits) @ u
    return u


#: Two MS(pi/4) pulses around addressed Stark shifts on ions 1 and 3.
GM_MEASUREMENT_GATES = (
    {"gate": "ms", "theta": np.pi / 4, "phi": np.pi / 4},
    {"gate": "z", "theta": np.pi, "target": 1},
    {"gate": "z", "theta": np.pi, "target": 3},
    {"gate": "ms", "theta": np.pi / 4, "phi": np.pi / 4},
)


@dataclass(frozen=True)
class GMCircuit:
    """A concrete single-setting generalized measurement."""

    input_state: np.ndarray
    measurement_map: np.ndarray
    outcome_labels: tuple
    preparation: tuple
    measurement: tuple
    initial_bits: str = "1111"
    register: tuple = GM_REGISTER
    system_index: int = GM_SYSTEM

    def __iter__(self):
        return iter((self.input_state, self.measurement_map, self.outcome_labels))

    def effects(self) -> np.ndarray:
        u = self.measurement_map
        return np.einsum("ba,bc->bac", u.conj(), u)  # U^dag |b><b| U

    def lambda_matrix(self) -> LambdaMatrix:
        setting = ("gm", self.input_state, self.effects(), self.outcome_labels)
        return lambda_from_settings([setting], self.system_index, len(self.register))

    def to_dict(self) -> dict:
        return {
            "schema_version": GM_FIXTURE_VERSION,
            "register": list(self.register),
            "system_index": self.system_index,
            "initial_bits": self.initial_bits,
            "preparation": [dict(g) for g in self.preparation],
            "measurement": [dict(g) for g in self.measurement],
        }


def gm_circuit_from_gates(preparation: Sequence[Mapping], measurement: Sequence[Mapping] = GM_MEASUREMENT_GATES,
                          initial_bits: str = "1111", check: bool = True) -> GMCircuit:
    n = len(GM_REGISTER)
    psi = circuit_unitary(preparation, n) @ qcore.ket(initial_bits)
    circuit = GMCircuit(
        input_state=qcore.projector(psi),
        measurement_map=circuit_unitary(measurement, n),
        outcome_labels=tuple(format(b, "04b") for b in range(16)),
        preparation=tuple(dict(g) for g in preparation),
        measurement=tuple(dict(g) for g in measurement),
        initial_bits=initial_bits,
    )
    if check:
        cond = circuit.lambda_matrix().condition_number
        if not cond < GM_MAX_CONDITION:
            raise ConstructionError(f"GM circuit gives cond(Lambda) = {cond:.3g} >= {GM_MAX_CONDITION:g}")
    return circuit


def load_gm_circuit(path=None) -> GMCircuit:
    """Read a GM circuit document (the packaged fixture by default)."""
    if path is None:
        text = resources.files("dcqd_lab.data").joinpath(GM_FIXTURE).read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    if doc.get("schema_version") != GM_FIXTURE_VERSION:
        raise DomainError(f"unsupported GM fixture version {doc.get('schema_version')!r}")
    if tuple(doc["register"]) != GM_REGISTER or doc["system_index"] != GM_SYSTEM:
        raise DomainError("GM fixture register layout differs from the supported one")
    return gm_circuit_from_gates(doc["preparation"], doc["measurement"], doc["initial_bits"])


_GM_CACHE = {}


def gm_circuit() -> GMCircuit:
    """The packaged GM circuit; unpacks as ``(input_state, measurement_map, outcome_labels)``."""
    if "default" not in _GM_CACHE:
        _GM_CACHE["default"] = load_gm_circuit()
    return _GM_CACHE["default"]


def _gm_gate_library() -> list:
    thetas = [k * np.pi / 8 for k in range(1, 9)]
    phis = [0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4]
    lib = []
    for t in thetas:
        for p in phis:
            lib.append({"gate": "rotation", "theta": t, "phi": p})
            lib.append({"gate": "ms", "theta": t, "phi": p})
        for ion in range(1, 5):
            lib.append({"gate": "z", "theta": t, "target": ion})
    return lib


def pauli_detectability(amplitudes: np.ndarray, tol: float = 1e-12) -> float:
    """How well the zero-probability outcomes of each Pauli process flag any admixture.

    ``amplitudes[m, b] = <b| U_meas S_m |psi>``.  For Pauli target ``m`` the outcomes with
    zero probability define the operator ``Z_m = sum_b u_b u_b^dagger`` (``u_b`` the
    conjugated amplitude column); its smallest eigenvalue on the complement of ``m`` is
    positive exactly when every orthogonal admixture raises some zero-probability outcome,
    which makes the MLE error of that unitary shrink as 1/shots rather than 1/sqrt(shots).
    Returns the minimum over the four Paulis (0 if some Pauli has no zero outcome).
    """
    a = np.asarray(amplitudes)
    u = a.conj()
    score = np.inf
    for m in range(4):
        zero = np.abs(a[m]) ** 2 < tol
        if not zero.any():
            return 0.0
        z = u[:, zero] @ u[:, zero].conj().T
        rest = [k for k in range(4) if k != m]
        score = min(score, np.linalg.eigvalsh(z[np.ix_(rest, rest)])[0])
    return float(max(score, 0.0))


def search_gm_circuit(max_depth: int = 6, trials_per_depth: int = 20000, min_detectability: float = 0.01,
                      seed: int = 2012) -> GMCircuit:
    """Seeded random search for a GM preparation circuit over global rotations, global MS
    gates and addressed Z rotations, all starting from ``|1111>``.

    A circuit is admissible when ``cond(Lambda) < 1e3`` and its :func:`pauli_detectability`
    is at least ``min_detectability``.  Depths are tried in increasing order, and the
    best-conditioned admissible circuit of the first depth that has one is returned.

    :raises ConstructionError: if no admissible circuit is found up to ``max_depth``.
    """
    n = len(GM_REGISTER)
    lib = _gm_gate_library()
    units = [gate_unitary(g, n) for g in lib]
    meas = circuit_unitary(GM_MEASUREMENT_GATES, n)
    sig = np.array([qcore.embed_operator(p, [GM_SYSTEM], n) for p in qcore.PAULIS])
    meas_sig = np.einsum("bc,mcd->mbd", meas, sig)
    psi0 = qcore.ket("1111")
    rng = _rng.stream(seed, "gm-search")
    for depth in range(1, max_depth + 1):
        best = (np.inf, None)
        for _ in range(trials_per_depth):
            idx = rng.integers(len(lib), size=depth)
            psi = psi0
            for i in idx:
                psi = units[i] @ psi
            amp = meas_sig @ psi
            # Lambda[b, (m, n)] = <psi|S_n^dag E_b S_m|psi> = amp[m, b] conj(amp[n, b])
            cond = np.linalg.cond(np.einsum("mb,nb->bmn", amp, amp.conj()).reshape(16, 16))
            if cond < min(best[0], GM_MAX_CONDITION) and pauli_detectability(amp) >= min_detectability:
                best = (cond, [lib[i] for i in idx])
        if best[1] is not None:
            return gm_circuit_from_gates(best[1])
    raise ConstructionError(f"no admissible GM circuit up to depth {max_depth}")


def gm_probabilities(chi: ProcessMatrix, circuit: GMCircuit = None) -> np.ndarray:
    """The 16 outcome probabilities (labels ``circuit.outcome_labels``) via the measurement model."""
    if chi.num_qubits != 1:
        raise DomainError("the GM characterises single-qubit processes")
    circuit = gm_circuit() if circuit is None else circuit
    return circuit.lambda_matrix().probabilities(chi)


def gm_probabilities_direct(channel: KrausChannel, circuit: GMCircuit = None) -> np.ndarray:
    """Brute-force four-qubit simulation: apply the process to S, rotate, read out."""
    circuit = gm_circuit() if circuit is None else circuit
    out = apply(channel, circuit.input_state, [circuit.system_index])
    u = circuit.measurement_map
    return np.real(np.diag(u @ out @ u.conj().T))


# ----------------------------------------------------------------------------------------------
# Shot sampling


def sample_counts(probabilities: Sequence[float], shots: int, seed: int, configuration_id: str = "0",
                  outcome_labels: Sequence[str] = None) -> CountRecord:
    """Multinomial draw of ``shots`` outcomes, reproducible from ``(seed, configuration_id)``.

    :raises DomainError: probabilities below -1e-9, not summing to 1 within 1e-9, or shots < 1.
    """
    p = np.asarray(probabilities, dtype=float)
    if shots < 1:
        raise DomainError(f"shots must be >= 1, got {shots}")
    if np.any(p < -1e-9):
        raise DomainError(f"negative probability {p.min():.3g}")
    if abs(p.sum() - 1) > 1e-9:
        raise DomainError(f"probabilities sum to {p.sum():.12g}")
    p = np.clip(p, 0, None)
    p = p / p.sum()
    labels = [str(k) for k in range(len(p))] if outcome_labels is None else list(outcome_labels)
    if len(labels) != len(p):
        raise DomainError("one label per outcome is required")
    counts = _rng.stream(seed, "counts", configuration_id).multinomial(int(shots), p)
    return CountRecord(str(configuration_id), dict(zip(labels, counts.tolist())), int(shots))


def simulate_counts(lam: LambdaMatrix, probabilities: np.ndarray, shots: int, seed: int) -> list:
    """Sample every configuration of ``lam`` from flat ``probabilities``."""
    return [sample_counts(p, shots, seed, cid, labels)
            for (cid, labels), p in zip(lam.configurations, lam.split(probabilities))]


def exact_counts(lam: LambdaMatrix, probabilities: np.ndarray, shots: float = 1e7) -> list:
    """Rounded ``probabilities * shots`` per configuration (a large-shot stand-in for data)."""
    records = []
    for (cid, labels), p in zip(lam.configurations, lam.split(probabilities)):
        n = np.rint(np.clip(p, 0, None) * shots).astype(int)
        records.append(CountRecord(cid, dict(zip(labels, n.tolist())), int(n.sum())))
    return records
