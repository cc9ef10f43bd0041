"""Process reconstruction (linear inversion, maximum likelihood), fidelity and bootstrap errors."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _rng, qcore
from .channels import ProcessMatrix, chi_to_choi, pauli_change_of_basis
from .exceptions import DegenerateConfigurationError, DomainError, NotPSDError
from .protocols import CountRecord, LambdaMatrix, sample_counts

PROB_FLOOR = 1e-12
MLE_TOL = 1e-10
MLE_MAX_ITER = 100_000
DEFAULT_RESAMPLES = 200


@dataclass(frozen=True)
class ReconstructionResult:
    chi: ProcessMatrix
    method: str
    log_likelihood: float = None
    iterations: int = 0
    converged: bool = True
    log_likelihood_trace: np.ndarray = field(default=None, repr=False)

    @property
    def is_psd(self) -> bool:
        return self.chi.is_psd

    @property
    def is_monotone(self) -> bool:
        """True when the recorded log-likelihood never decreased."""
        tr = self.log_likelihood_trace
        return tr is None or bool(np.all(np.diff(tr) >= 0))


@dataclass(frozen=True)
class FidelityEstimate:
    fidelity: float
    std_error: float
    bootstrap_samples: int
    samples: np.ndarray = field(default=None, repr=False)
    fit: ReconstructionResult = field(default=None, repr=False)
    resample_fits: tuple = field(default=(), repr=False)


def linear_invert(lam: LambdaMatrix, probabilities) -> ReconstructionResult:
    """Solve ``Lambda chi = p`` (least squares when Lambda has more rows than columns).

    ``probabilities`` is a flat array aligned with the rows of ``lam`` or a list of
    :class:`CountRecord` (converted to frequencies).  PSD is not enforced.

    :raises DegenerateConfigurationError: if ``lam`` does not have full column rank.
    """
    if len(probabilities) and isinstance(probabilities[0], CountRecord):
        p = lam.frequencies(probabilities)
    else:
        p = np.asarray(probabilities, dtype=float)
    if p.shape != (lam.matrix.shape[0],):
        raise DomainError(f"expected {lam.matrix.shape[0]} probabilities, got shape {p.shape}")
    m = lam.matrix
    if not np.isfinite(lam.condition_number) or lam.condition_number > 1e12:
        raise DegenerateConfigurationError(f"Lambda is singular (cond {lam.condition_number:.3g})")
    if m.shape[0] == m.shape[1]:
        x = np.linalg.solve(m, p)
    else:
        x = np.linalg.lstsq(m, p, rcond=None)[0]
    d2 = 4 ** lam.num_qubits
    chi = x.reshape(d2, d2)
    return ReconstructionResult(ProcessMatrix((chi + chi.conj().T) / 2), "linear_inversion")


def _tr_out_factor(c: np.ndarray, d: int) -> np.ndarray:
    """Partial trace over the first (output) factor of a ``d*d`` square matrix."""
    return np.einsum("aiaj->ij", c.reshape(d, d, d, d))


def _log_likelihood(c: np.ndarray, w: np.ndarray, n: np.ndarray) -> float:
    p = np.einsum("rab,ba->r", w, c).real
    return float(np.dot(n, np.log(np.clip(p, PROB_FLOOR, None))))


def mle_reconstruct(lam: LambdaMatrix, counts: Sequence[CountRecord], initial: ProcessMatrix = None,
                    tol: float = MLE_TOL, max_iter: int = MLE_MAX_ITER) -> ReconstructionResult:
    """Maximum-likelihood CPTP process from multinomial counts.

    Iterates the diluted fixed-point map ``C -> L^-1 (1 + e R) C (1 + e R) L^-1`` on the
    Choi matrix ``C`` (unit partial trace over the output), with ``R`` the likelihood
    gradient and ``L = 1 (x) sqrt(Tr_out[...])`` restoring trace preservation.  A step is
    accepted only if it does not lower the likelihood; otherwise the dilution ``e`` is
    halved.  Iteration stops when the gain drops below ``tol`` or no ascending step is
    left.  ``converged`` is False only when ``max_iter`` is exhausted.
    """
    n = lam.count_vector(counts)
    d = 2 ** lam.num_qubits
    w = lam.choi_effects()
    total = n.sum()
    if total <= 0:
        raise DomainError("no counts to fit")
    b = pauli_change_of_basis(lam.num_qubits)
    if initial is None:
        c = np.eye(d * d, dtype=complex) / d
    else:
        c = d * (b @ initial.chi @ b.conj().T)
    eye = np.eye(d * d)
    ll = _log_likelihood(c, w, n)
    trace = [ll]
    eps = 1.0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        p = np.clip(np.einsum("rab,ba->r", w, c).real, PROB_FLOOR, None)
        r = np.einsum("r,rab->ab", n / p, w) / total
        step_taken = False
        while eps > 1e-14:
            g = eye + eps * r
            m = g @ c @ g
            m = (m + m.conj().T) / 2
            lam_inv = np.linalg.inv(qcore.psd_sqrt(_tr_out_factor(m, d)))
            k = np.kron(np.eye(d), lam_inv)
            c_new = k @ m @ k.conj().T
            c_new = (c_new + c_new.conj().T) / 2
            ll_new = _log_likelihood(c_new, w, n)
            if ll_new >= ll:
                step_taken = True
                break
            eps /= 2
        if not step_taken:
            converged = True
            break
        gain = ll_new - ll
        c, ll = c_new, ll_new
        trace.append(ll)
        eps = min(eps * 2, 1e3)
        if gain < tol:
            converged = True
            break
    chi = b.conj().T @ c @ b / d
    return ReconstructionResult(ProcessMatrix((chi + chi.conj().T) / 2), "mle", ll, it, converged,
                                np.array(trace))


def cptp_residuals(chi: ProcessMatrix) -> tuple:
    """``(min Choi eigenvalue, max |Tr_out(choi) - 1/d|)`` of a process."""
    choi = chi_to_choi(chi)
    d = chi.dim
    reduced = _tr_out_factor(choi, d)
    return float(np.linalg.eigvalsh(choi)[0]), float(np.max(np.abs(reduced - np.eye(d) / d)))


def _choi_state(chi: ProcessMatrix) -> np.ndarray:
    choi = chi_to_choi(chi)
    lo = np.linalg.eigvalsh(choi)[0]
    if lo < -qcore.PSD_ATOL:
        raise NotPSDError(f"process is not completely positive (Choi eigenvalue {lo:.3g})")
    return choi / np.trace(choi).real


def process_fidelity(a: ProcessMatrix, b: ProcessMatrix) -> float:
    """Uhlmann-Jozsa fidelity ``(Tr sqrt(sqrt(A) B sqrt(A)))^2`` of the two Choi states.

    Evaluated as the squared nuclear norm of ``sqrt(A) sqrt(B)``, which is symmetric and
    stays accurate for rank-deficient (e.g. unitary) processes.

    :raises NotPSDError: if either process is not completely positive within 1e-10.
    """
    if a.num_qubits != b.num_qubits:
        raise DomainError("fidelity needs processes on the same number of qubits")
    sa = qcore.psd_sqrt(_choi_state(a))
    sb = qcore.psd_sqrt(_choi_state(b))
    f = np.linalg.svd(sa @ sb, compute_uv=False).sum() ** 2
    return float(np.clip(f, 0.0, 1.0))


def bootstrap_fidelity(lam: LambdaMatrix, counts: Sequence[CountRecord], target: ProcessMatrix,
                       resamples: int = DEFAULT_RESAMPLES, seed: int = 0, threads: int = 1,
                       fit: ReconstructionResult = None) -> FidelityEstimate:
    """Parametric bootstrap of the MLE fidelity to ``target``.

    Counts are redrawn from the probabilities of the MLE fit at the original shot numbers;
    each resample is refit and scored.  Resample ``k`` uses its own random stream, so the
    estimate does not depend on ``threads``.
    """
    if resamples < 2:
        raise DomainError("at least two bootstrap resamples are needed")
    fit = mle_reconstruct(lam, counts) if fit is None else fit
    shots = {c.configuration_id: c.shots for c in counts}
    probs = lam.split(lam.probabilities(fit.chi))

    def one(k):
        recs = [sample_counts(np.clip(p, 0, None) / np.clip(p, 0, None).sum(), shots[cid],
                              int(_rng.stream(seed, "bootstrap", k).integers(2 ** 63)), cid, labels)
                for (cid, labels), p in zip(lam.configurations, probs)]
        res = mle_reconstruct(lam, recs)
        return process_fidelity(res.chi, target), res

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, range(resamples)))
    else:
        out = [one(k) for k in range(resamples)]
    samples = np.array([f for f, _ in out])
    return FidelityEstimate(process_fidelity(fit.chi, target), float(np.std(samples, ddof=1)),
                            resamples, samples, fit, tuple(r for _, r in out))
