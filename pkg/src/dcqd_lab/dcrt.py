"""Relaxation times from a single configuration, plus the traditional baselines.

A Bell pair ``|Phi+>`` is exposed to relaxation for a time ``t`` and measured in the Bell
basis.  The outcome frequencies are the process-matrix diagonals, and two combinations
of them carry the relaxation times:

* ``chi11 - chi44 = exp(-N^2 t / T2)``
* ``1 - 2 (chi22 + chi33) = (1 - 2 a0)^2 (1 - 2 e) + (2 + 4 a0 (a0 - 1)) e^2`` with
  ``e = exp(-t / T1)`` when both ions relax (``N = 2``); ``= e`` when only one does.

The two Ramsey / spontaneous-decay simulators provide the usual one-observable estimates
for comparison.
"""
import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from . import qcore
from .channels import (KrausChannel, amplitude_damping_kraus, apply, collective_dephasing_kraus,
                       collective_rotation, thermalization_kraus)
from .exceptions import DomainError, InsufficientDataError, PhysicalityError
from .protocols import bsm_probabilities, sample_counts

CSV_COLUMNS = ("time_s", "n_phi_plus", "n_psi_plus", "n_psi_minus", "n_phi_minus", "shots")


# ----------------------------------------------------------------------------------------------
# Model curves


def dephasing_signal(t, T2: float, N: int = 2) -> np.ndarray:
    """``chi11 - chi44`` after time ``t``."""
    return np.exp(-N ** 2 * np.asarray(t, dtype=float) / T2)


def population_signal(t, T1: float, a0: float = 1.0, N: int = 2) -> np.ndarray:
    """``1 - 2 (chi22 + chi33)`` after time ``t``."""
    e = np.exp(-np.asarray(t, dtype=float) / T1)
    if N == 1:
        return e
    return (1 - 2 * a0) ** 2 * (1 - 2 * e) + (2 + 4 * a0 * (a0 - 1)) * e ** 2


# ----------------------------------------------------------------------------------------------
# Simulation


def _check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise DomainError("times must be a non-empty 1-d sequence")
    if np.any(t < 0) or np.any(np.diff(t) <= 0) or not np.all(np.isfinite(t)):
        raise DomainError("times must be finite, non-negative and strictly increasing")
    return t


def _check_relaxation(T1, T2, a0, N):
    if not (T1 > 0 and T2 > 0):
        raise DomainError("T1 and T2 must be positive")
    if T2 > 2 * T1 * (1 + 1e-12):
        raise PhysicalityError(f"T2={T2} exceeds 2*T1={2 * T1}")
    if not 0 <= a0 <= 1:
        raise DomainError("a0 must lie in [0, 1]")
    if N not in (1, 2):
        raise DomainError("N must be 1 or 2 for a Bell pair")


def dcrt_channel(t: float, T1: float, T2: float, a0: float = 1.0, N: int = 2, ground: int = 1) -> KrausChannel:
    """Two-qubit relaxation of duration ``t`` on the first ``N`` qubits of a pair.

    Each exposed qubit thermalises independently with time ``T1`` toward population
    ``a0`` of ``|ground>`` (its coherence lost only through T1, i.e. ``T2 = 2 T1``); a
    correlated dephasing of the exposed qubits then brings the decay of their joint
    ``|0..0><1..1|`` coherence to exactly ``exp(-N^2 t / T2)``.
    """
    _check_relaxation(T1, T2, a0, N)
    if np.isinf(T1):
        thermal = [np.eye(2, dtype=complex)]
        extra_rate = N ** 2 / T2
    else:
        thermal = thermalization_kraus(t, T1, 2 * T1, a0, ground)
        extra_rate = N ** 2 / T2 - N / (2 * T1)
    extra_rate = max(extra_rate, 0.0)
    t2_collective = np.inf if extra_rate == 0 else N ** 2 / extra_rate
    dephase = collective_dephasing_kraus(t, t2_collective, N)
    if N == 2:
        pop = [np.kron(a, b) for a in thermal for b in thermal]
        ops = [d @ k for d in dephase for k in pop]
    else:
        ops = [np.kron(d @ k, qcore.IDENTITY) for d in dephase for k in thermal]
    return KrausChannel(2, ops)


@dataclass(frozen=True)
class DecaySeries:
    """Bell-outcome data versus exposure time.

    ``chi_diagonals[k]`` holds ``(chi11, chi22, chi33, chi44)`` (Phi+, Psi+, Psi-, Phi-
    frequencies) at ``times[k]``; ``counts`` is ``None`` for noiseless series.
    """

    times: np.ndarray
    chi_diagonals: np.ndarray
    shots_per_point: int = None
    N: int = 2
    counts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        t = _check_times(self.times)
        diag = np.asarray(self.chi_diagonals, dtype=float)
        if diag.shape != (t.size, 4):
            raise DomainError(f"chi_diagonals must have shape ({t.size}, 4), got {diag.shape}")
        if np.any(diag < -1e-9) or np.any(diag.sum(axis=1) > 1 + 1e-9):
            raise DomainError("chi diagonals must be non-negative and sum to at most 1")
        if self.N not in (1, 2):
            raise DomainError("N must be 1 or 2")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "chi_diagonals", diag)

    @classmethod
    def from_counts(cls, times, counts, N: int = 2) -> "DecaySeries":
        counts = np.asarray(counts, dtype=int)
        if counts.ndim != 2 or counts.shape[1] != 4 or np.any(counts < 0):
            raise DomainError("counts must be a non-negative (n, 4) integer array")
        shots = counts.sum(axis=1)
        if np.any(shots == 0):
            raise DomainError("every time point needs at least one shot")
        per_point = int(shots[0]) if np.all(shots == shots[0]) else None
        return cls(times, counts / shots[:, None], per_point, N, counts)

    @property
    def dephasing(self) -> np.ndarray:
        return self.chi_diagonals[:, 0] - self.chi_diagonals[:, 3]

    @property
    def population(self) -> np.ndarray:
        return 1 - 2 * (self.chi_diagonals[:, 1] + self.chi_diagonals[:, 2])

    def to_csv(self, path) -> None:
        if self.counts is None:
            raise DomainError("only count-based series can be written as CSV")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for t, row in zip(self.times, self.counts):
                w.writerow([repr(float(t)), *map(int, row), int(row.sum())])

    @classmethod
    def from_csv(cls, path, N: int = 2) -> "DecaySeries":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
                raise DomainError(f"expected CSV columns {CSV_COLUMNS}, got {reader.fieldnames}")
            rows = list(reader)
        try:
            times = [float(r["time_s"]) for r in rows]
            counts = [[int(r[c]) for c in CSV_COLUMNS[1:5]] for r in rows]
            shots = [int(r["shots"]) for r in rows]
        except (TypeError, ValueError) as exc:
            raise DomainError(f"malformed decay-series CSV: {exc}") from None
        if any(sum(c) != s for c, s in zip(counts, shots)):
            raise DomainError("outcome counts do not add up to the shots column")
        return cls.from_counts(times, counts, N)


def dcrt_probabilities(t: float, T1: float, T2: float, a0: float = 1.0, N: int = 2) -> np.ndarray:
    """Exact Bell-outcome probabilities of the relaxed ``|Phi+>`` pair."""
    rho = apply(dcrt_channel(t, T1, T2, a0, N), qcore.bell_state(1))
    return bsm_probabilities(rho)


def simulate_dcrt_series(T1: float, T2: float, a0: float, N: int, times: Sequence[float],
                         shots: int = None, seed: int = 0) -> DecaySeries:
    """Simulate the single-configuration experiment at each time.

    ``shots=None`` returns the exact probabilities (infinite-shot limit).
    """
    _check_relaxation(T1, T2, a0, N)
    t = _check_times(times)
    probs = np.array([dcrt_probabilities(tk, T1, T2, a0, N) for tk in t])
    if shots is None:
        return DecaySeries(t, np.clip(probs, 0, None), None, N)
    counts = [sample_counts(p / p.sum(), shots, seed, f"dcrt/{k}", qcore.BELL_LABELS).as_array(qcore.BELL_LABELS)
              for k, p in enumerate(np.clip(probs, 0, None))]
    return DecaySeries.from_counts(t, np.array(counts, dtype=int), N)


def geometric_grid(T: float, points: int = 12, lo: float = 1 / 50, hi: float = 2.0) -> np.ndarray:
    """``points`` geometrically spaced times between ``lo*T`` and ``hi*T``."""
    return np.geomspace(lo * T, hi * T, points)


def dcrt_time_grid(T1: float, T2: float, points_per_branch: int = 12) -> np.ndarray:
    """Union of the dephasing-branch grid (scale T2) and the population-branch grid (scale T1)."""
    return np.unique(np.concatenate([geometric_grid(T2, points_per_branch),
                                     geometric_grid(T1, points_per_branch)]))


# ----------------------------------------------------------------------------------------------
# Fitting


@dataclass(frozen=True)
class RelaxationFit:
    T1: float
    T2: float
    T1_err: float
    T2_err: float
    a0: float
    residual_norm: float
    converged: bool = True
    a0_err: float = 0.0
    N: int = 2

    @property
    def is_physical(self) -> bool:
        """``T2 <= 2 T1`` within the combined one-sigma uncertainty."""
        return self.T2 - 2 * self.T1 <= np.hypot(self.T2_err, 2 * self.T1_err)

    def to_dict(self) -> dict:
        """JSON-ready fields; non-finite uncertainties become ``None``."""
        doc = {}
        for k, v in self.__dict__.items():
            if k == "N":
                doc[k] = int(v)
            elif isinstance(v, (bool, np.bool_)):
                doc[k] = bool(v)
            else:
                doc[k] = float(v) if np.isfinite(v) else None
        return doc


@dataclass(frozen=True)
class ExponentialFit:
    tau: float
    tau_err: float
    residual_norm: float
    converged: bool = True


def _stderr(res, n_params: int) -> np.ndarray:
    dof = max(res.fun.size - n_params, 1)
    s2 = 2 * res.cost / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
    except np.linalg.LinAlgError:
        return np.full(n_params, np.inf)
    return np.sqrt(np.clip(np.diag(cov), 0, None))


def _lsq(model, jac, x0, y, variance=None, bounds=None, rounds: int = 3):
    """Damped least squares of ``model(x) ~ y``.

    With ``variance`` (a map from model values to per-point variances) the residuals are
    reweighted from the previous round's model, starting unweighted.
    """
    sigma = np.ones_like(y)
    for _ in range(rounds if variance is not None else 1):
        kw = {"method": "lm"} if bounds is None else {"method": "trf", "bounds": bounds}
        res = least_squares(lambda x: (model(x) - y) / sigma, x0, jac=lambda x: jac(x) / sigma[:, None], **kw)
        x0 = res.x
        if variance is not None:
            sigma = np.sqrt(variance(model(res.x)))
    return res, _stderr(res, len(x0))


def _log_linear_rate(t, y, floor: float = 0.05) -> float:
    """Decay rate ``k`` of ``y ~ exp(-k t)`` by regression of ``log y`` through the origin."""
    ok = (y > floor) & (t > 0)
    if not np.any(ok):
        return 1.0 / np.median(t[t > 0]) if np.any(t > 0) else 1.0
    tt, ly = t[ok], np.log(y[ok])
    k = -np.dot(tt, ly) / np.dot(tt, tt)
    return k if k > 0 else 1.0 / np.median(tt)


def _exp_fit(t, y, scale, variance=None):
    # Parametrised by u = log(tau) so the damped steps cannot leave tau > 0.
    u0 = np.log(scale / _log_linear_rate(t, y))

    def model(x):
        return np.exp(-scale * t * np.exp(-x[0]))

    def jac(x):
        return (model(x) * scale * t * np.exp(-x[0]))[:, None]

    res, err = _lsq(model, jac, [u0], y, variance)
    tau = float(np.exp(res.x[0]))
    return tau, tau * float(err[0]), res


def fit_exponential(t, y, scale: float = 1.0, shots=None) -> ExponentialFit:
    """Least-squares ``y = exp(-scale * t / tau)`` (damped Gauss-Newton, analytic Jacobian).

    :param shots: shots behind each ``y`` when ``y`` is a binomial fraction; enables
        variance weighting.
    """
    t, y = np.asarray(t, float), np.asarray(y, float)
    if t.size < 3:
        raise InsufficientDataError(f"need at least 3 points, got {t.size}")
    variance = None
    if shots is not None:
        n = np.broadcast_to(np.asarray(shots, float), t.shape)
        variance = lambda m: np.maximum(m * (1 - m), 1 / n) / n
    tau, err, res = _exp_fit(t, y, scale, variance)
    return ExponentialFit(tau, err, float(np.linalg.norm(np.exp(-scale * t / tau) - y)), bool(res.success))


def _fit_population(t, y, N, a0, fit_a0, shots=None):
    # Coarse log-spaced scan for the starting T1 since the a0 = 1 curve is not monotone.
    pos = t[t > 0]
    grid = np.geomspace(pos.min() / 10 if pos.size else 1e-9, t.max() * 10, 400)
    sse = [np.sum((population_signal(t, g, a0, N) - y) ** 2) for g in grid]
    u0 = np.log(grid[int(np.argmin(sse))])

    def model(x):
        return population_signal(t, np.exp(x[0]), x[1] if fit_a0 else a0, N)

    def jac(x):
        T1 = np.exp(x[0])
        a = x[1] if fit_a0 else a0
        e = np.exp(-t / T1)
        de = e * t / T1  # d e / d log(T1)
        if N == 1:
            cols = [de] + ([np.zeros_like(t)] if fit_a0 else [])
        else:
            dy_de = -2 * (1 - 2 * a) ** 2 + 2 * (2 + 4 * a * (a - 1)) * e
            cols = [dy_de * de]
            if fit_a0:
                cols.append(-4 * (1 - 2 * a) * (1 - 2 * e) + (8 * a - 4) * e ** 2)
        return np.column_stack(cols)

    variance = None
    if shots is not None:
        variance = lambda m: np.maximum(1 - m ** 2, 1 / shots) / shots
    x0 = [u0, a0] if fit_a0 else [u0]
    bounds = ([-np.inf, 0], [np.inf, 1]) if fit_a0 else None
    res, err = _lsq(model, jac, x0, y, variance, bounds)
    T1 = float(np.exp(res.x[0]))
    return T1, T1 * float(err[0]), (float(res.x[1]), float(err[1])) if fit_a0 else (a0, 0.0), res


def fit_relaxation(series: DecaySeries, fix_a0: float = 1.0, fit_a0: bool = False) -> RelaxationFit:
    """Fit T2 to ``chi11 - chi44`` and T1 to ``1 - 2 (chi22 + chi33)`` of one series.

    Count-based series are fitted with residuals weighted by their multinomial variance;
    noiseless series unweighted.

    :param fix_a0: equilibrium population used when ``fit_a0`` is False (1 = ground state,
        1/2 = unital homogenisation).
    :param fit_a0: also fit ``a0`` (bounded to [0, 1]); poorly conditioned in practice.
    :raises InsufficientDataError: for fewer than three time points.
    """
    t = series.times
    if t.size < 3:
        raise InsufficientDataError(f"need at least 3 time points, got {t.size}")
    if not 0 <= fix_a0 <= 1:
        raise DomainError("fix_a0 must lie in [0, 1]")
    N = series.N
    shots = None if series.counts is None else series.counts.sum(axis=1).astype(float)
    y2, y1 = series.dephasing, series.population
    variance2 = None
    if shots is not None:
        even = series.chi_diagonals[:, 0] + series.chi_diagonals[:, 3]
        variance2 = lambda m: np.maximum(even - m ** 2, 1 / shots) / shots
    T2, T2_err, res2 = _exp_fit(t, y2, N ** 2, variance2)
    T1, T1_err, (a0, a0_err), res1 = _fit_population(t, y1, N, fix_a0, fit_a0, shots)
    resid = float(np.hypot(np.linalg.norm(dephasing_signal(t, T2, N) - y2),
                           np.linalg.norm(population_signal(t, T1, a0, N) - y1)))
    converged = bool(res1.success and res2.success and np.isfinite(T1_err) and np.isfinite(T2_err))
    return RelaxationFit(T1, T2, T1_err, T2_err, a0, resid, converged, a0_err, N)


# ----------------------------------------------------------------------------------------------
# Baselines


@dataclass(frozen=True)
class RamseySeries:
    times: np.ndarray
    phases: np.ndarray
    excited_fraction: np.ndarray
    contrast: np.ndarray
    shots: int = None


def _fringe_contrast(phases, fraction) -> float:
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    c = np.linalg.lstsq(design, fraction, rcond=None)[0]
    return float(2 * np.hypot(c[1], c[2]))


def simulate_ramsey(T2: float, times: Sequence[float], phases: Sequence[float] = None, shots: int = None,
                    seed: int = 0) -> RamseySeries:
    """Single-ion Ramsey fringes with pure dephasing ``exp(-t/T2)`` of the coherence.

    The ion starts in ``|1>``, gets ``U(pi/2, 0)``, waits, gets ``U(pi/2, phi)`` and is read
    out; the excited (``|0>``) fraction is fitted with ``a + b cos(phi) + c sin(phi)`` and
    the contrast is ``2 sqrt(b^2 + c^2)``.
    """
    if T2 <= 0:
        raise DomainError("T2 must be positive")
    t = _check_times(times)
    phases = np.linspace(0, 2 * np.pi, 8, endpoint=False) if phases is None else np.asarray(phases, float)
    if phases.size < 3:
        raise DomainError("at least three phases are needed to extract a contrast")
    first = collective_rotation(np.pi / 2, 0.0)
    rho0 = qcore.projector(first @ qcore.ket("1"))
    frac = np.empty((t.size, phases.size))
    for i, tk in enumerate(t):
        rho_t = apply(KrausChannel(1, collective_dephasing_kraus(tk, T2, 1)), rho0)
        for j, ph in enumerate(phases):
            second = collective_rotation(np.pi / 2, ph)
            p0 = float(np.clip(np.real(second @ rho_t @ second.conj().T)[0, 0], 0, 1))
            if shots is None:
                frac[i, j] = p0
            else:
                rec = sample_counts([p0, 1 - p0], shots, seed, f"ramsey/{i}/{j}", ("0", "1"))
                frac[i, j] = rec.outcome_counts["0"] / shots
    contrast = np.array([_fringe_contrast(phases, f) for f in frac])
    return RamseySeries(t, phases, frac, contrast, shots)


def fit_ramsey(series: RamseySeries) -> ExponentialFit:
    """T2 from the contrast decay ``exp(-t/T2)``."""
    return fit_exponential(series.times, series.contrast, 1.0)


@dataclass(frozen=True)
class SurvivalSeries:
    times: np.ndarray
    survival: np.ndarray
    shots: int = None
    counts: np.ndarray = field(default=None, repr=False)


def simulate_spontaneous_decay(T1: float, times: Sequence[float], shots: int = None, seed: int = 0,
                               ground: int = 1) -> SurvivalSeries:
    """Two ions prepared in the excited state decay independently; record P(both excited)."""
    if T1 <= 0:
        raise DomainError("T1 must be positive")
    t = _check_times(times)
    excited = "0" if ground == 1 else "1"
    flip = collective_rotation(np.pi, 0.0, 2)
    rho0 = qcore.projector(flip @ qcore.ket(str(ground) * 2))
    idx = int(excited * 2, 2)
    surv = np.empty(t.size)
    counts = np.empty(t.size, dtype=int) if shots is not None else None
    for i, tk in enumerate(t):
        decay = KrausChannel(1, amplitude_damping_kraus(-np.expm1(-tk / T1), ground))
        rho = apply(decay, apply(decay, rho0, [0]), [1])
        p = float(np.clip(rho[idx, idx].real, 0, 1))
        if shots is None:
            surv[i] = p
        else:
            rec = sample_counts([p, 1 - p], shots, seed, f"decay/{i}", ("both_excited", "other"))
            counts[i] = rec.outcome_counts["both_excited"]
            surv[i] = counts[i] / shots
    return SurvivalSeries(t, surv, shots, counts)


def fit_spontaneous_decay(series: SurvivalSeries) -> ExponentialFit:
    """T1 from the two-ion survival ``exp(-2t/T1)``."""
    return fit_exponential(series.times, series.survival, 2.0, series.shots)
