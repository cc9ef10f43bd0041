"""Command-line front end: ``dcqd-lab run | validate | fit | export-bloch``.

Experiments are described by a JSON configuration and produce a JSON result document
(complex matrices stored as separate ``real`` / ``imag`` nested arrays).  Exit codes:
0 on success, 2 for invalid input, 3 for numerical failure.
"""
import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import __version__, dcrt, estimation, protocols
from .channels import CHANNEL_KINDS, ChannelSpec, ProcessMatrix, bloch_axes, bloch_ellipsoid, kraus_to_chi, \
    build_channel
from .exceptions import ConstructionError, DegenerateConfigurationError, DomainError, InsufficientDataError, \
    NotPSDError, PhysicalityError

CONFIG_SCHEMA_VERSION = 1
RESULT_SCHEMA_VERSION = 1
RESULT_SCHEMA = "result.schema.json"
PROTOCOLS = ("sqpt", "dcqd", "gm", "dcrt", "ramsey", "decay")
TOMOGRAPHY = ("sqpt", "dcqd", "gm")
ESTIMATORS = ("mle", "linear")
THREADS_ENV = "DCQD_LAB_THREADS"

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class NumericalFailure(RuntimeError):
    pass


# ----------------------------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    shots: int
    seed: int
    channel: ChannelSpec = None
    probe_params: tuple = None
    dcrt_params: dict = None
    output_path: str = None
    estimator: str = "mle"
    bootstrap_resamples: int = estimation.DEFAULT_RESAMPLES
    schema_version: int = CONFIG_SCHEMA_VERSION

    def to_dict(self) -> dict:
        doc = {"schema_version": self.schema_version, "protocol": self.protocol, "shots": self.shots,
               "seed": self.seed, "estimator": self.estimator, "bootstrap_resamples": self.bootstrap_resamples}
        if self.channel is not None:
            doc["channel"] = self.channel.to_dict()
        if self.probe_params is not None:
            a, b = self.probe_params
            doc["probe_params"] = {"alpha": _complex_doc(a), "beta": _complex_doc(b)}
        if self.dcrt_params is not None:
            doc["dcrt_params"] = dict(self.dcrt_params)
        if self.output_path is not None:
            doc["output_path"] = self.output_path
        return doc


def _complex_doc(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _number(doc, key, where, kind=float, default=None, required=True):
    name = f"{where}.{key}" if where else key
    if key not in doc:
        if required and default is None:
            raise ConfigError(name, "is required")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"must be a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(name, f"must be an integer, got {v!r}")
        return int(v)
    if not np.isfinite(v):
        raise ConfigError(name, "must be finite")
    return float(v)


def _complex(v, name) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    raise ConfigError(name, "must be a real number or a [real, imag] pair")


_CONFIG_KEYS = {"schema_version", "protocol", "channel", "shots", "seed", "probe_params", "dcrt_params",
                "output_path", "estimator", "bootstrap_resamples"}
_DCRT_KEYS = {"T1", "T2", "a0", "N", "times", "points_per_branch", "fit_a0"}


def parse_config(doc) -> ExperimentConfig:
    """Validate a configuration document.

    :raises ConfigError: naming the first offending field.
    """
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")
    protocol = doc.get("protocol")
    if protocol not in PROTOCOLS:
        raise ConfigError("protocol", f"must be one of {PROTOCOLS}, got {protocol!r}")
    shots = _number(doc, "shots", "", int)
    if shots < 1:
        raise ConfigError("shots", "must be >= 1")
    seed = _number(doc, "seed", "", int, default=0, required=False)
    if seed < 0:
        raise ConfigError("seed", "must be non-negative")
    estimator = doc.get("estimator", "mle")
    if estimator not in ESTIMATORS:
        raise ConfigError("estimator", f"must be one of {ESTIMATORS}")
    resamples = _number(doc, "bootstrap_resamples", "", int, default=estimation.DEFAULT_RESAMPLES, required=False)
    if resamples != 0 and resamples < 2:
        raise ConfigError("bootstrap_resamples", "must be 0 (no bootstrap) or >= 2")
    output_path = doc.get("output_path")
    if output_path is not None and not isinstance(output_path, str):
        raise ConfigError("output_path", "must be a string")

    channel = None
    if protocol in TOMOGRAPHY:
        if "channel" not in doc:
            raise ConfigError("channel", f"is required for protocol {protocol}")
        ch = doc["channel"]
        if not isinstance(ch, dict) or ch.get("kind") not in CHANNEL_KINDS:
            raise ConfigError("channel.kind", f"must be one of {CHANNEL_KINDS}")
        try:
            channel = ChannelSpec.from_dict(ch)
        except (DomainError, PhysicalityError) as exc:
            raise ConfigError("channel", str(exc)) from None
        if channel.num_qubits != 1:
            raise ConfigError("channel", "tomography protocols characterise single-qubit channels")

    probe = None
    if "probe_params" in doc:
        pp = doc["probe_params"]
        if not isinstance(pp, dict) or set(pp) != {"alpha", "beta"}:
            raise ConfigError("probe_params", "must be an object with 'alpha' and 'beta'")
        probe = (_complex(pp["alpha"], "probe_params.alpha"), _complex(pp["beta"], "probe_params.beta"))
        if abs(abs(probe[0]) ** 2 + abs(probe[1]) ** 2 - 1) > 1e-9:
            raise ConfigError("probe_params", "|alpha|^2 + |beta|^2 must equal 1")

    dparams = None
    if protocol in ("dcrt", "ramsey", "decay"):
        dp = doc.get("dcrt_params")
        if not isinstance(dp, dict):
            raise ConfigError("dcrt_params", f"is required for protocol {protocol}")
        unknown = set(dp) - _DCRT_KEYS
        if unknown:
            raise ConfigError(f"dcrt_params.{sorted(unknown)[0]}", "unknown field")
        need_t1 = protocol in ("dcrt", "decay")
        need_t2 = protocol in ("dcrt", "ramsey")
        dparams = {}
        for key, needed in (("T1", need_t1), ("T2", need_t2)):
            v = _number(dp, key, "dcrt_params", required=needed)
            if v is not None:
                if v <= 0:
                    raise ConfigError(f"dcrt_params.{key}", "must be positive")
                dparams[key] = v
        if protocol == "dcrt":
            dparams["a0"] = _number(dp, "a0", "dcrt_params", default=1.0, required=False)
            dparams["N"] = _number(dp, "N", "dcrt_params", int, default=2, required=False)
            dparams["fit_a0"] = bool(dp.get("fit_a0", False))
            if not 0 <= dparams["a0"] <= 1:
                raise ConfigError("dcrt_params.a0", "must lie in [0, 1]")
            if dparams["N"] not in (1, 2):
                raise ConfigError("dcrt_params.N", "must be 1 or 2")
            if dparams["T2"] > 2 * dparams["T1"]:
                raise ConfigError("dcrt_params.T2", "must not exceed 2*T1")
        dparams["points_per_branch"] = _number(dp, "points_per_branch", "dcrt_params", int, default=12,
                                               required=False)
        if dparams["points_per_branch"] < 3:
            raise ConfigError("dcrt_params.points_per_branch", "must be >= 3")
        if "times" in dp:
            times = dp["times"]
            if (not isinstance(times, list) or len(times) < 3
                    or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in times)):
                raise ConfigError("dcrt_params.times", "must be a list of at least 3 numbers")
            t = np.asarray(times, dtype=float)
            if np.any(t < 0) or np.any(np.diff(t) <= 0):
                raise ConfigError("dcrt_params.times", "must be non-negative and strictly increasing")
            dparams["times"] = [float(x) for x in times]
    return ExperimentConfig(protocol, shots, seed, channel, probe, dparams, output_path, estimator, resamples,
                            version)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"{path} is not valid JSON ({exc.msg}, line {exc.lineno})") from None
    return parse_config(doc)


# ----------------------------------------------------------------------------------------------
# Result documents


def matrix_doc(m) -> dict:
    m = np.asarray(m, dtype=complex)
    return {"real": m.real.tolist(), "imag": m.imag.tolist()}


def matrix_from_doc(doc) -> np.ndarray:
    try:
        re, im = np.asarray(doc["real"], dtype=float), np.asarray(doc["imag"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed matrix document: {exc}") from None
    if re.shape != im.shape or re.ndim != 2 or re.shape[0] != re.shape[1]:
        raise DomainError("matrix document must hold two equal square arrays")
    return re + 1j * im


def result_schema() -> dict:
    return json.loads(resources.files("dcqd_lab.data").joinpath(RESULT_SCHEMA).read_text())


def validate_result(doc: dict) -> None:
    """Check ``doc`` against the bundled result schema (raises ``jsonschema.ValidationError``)."""
    import jsonschema

    jsonschema.validate(doc, result_schema())


def rescore(doc: dict) -> float:
    """Fidelity of a stored reconstruction to its stored target."""
    return estimation.process_fidelity(ProcessMatrix(matrix_from_doc(doc["chi"])),
                                       ProcessMatrix(matrix_from_doc(doc["target_chi"])))


def _tomography_lambda(cfg: ExperimentConfig):
    if cfg.protocol == "sqpt":
        return protocols.sqpt_lambda()
    if cfg.protocol == "dcqd":
        probes = protocols.prepare_probes(*cfg.probe_params) if cfg.probe_params else protocols.prepare_probes()
        return protocols.build_lambda(probes)
    return protocols.gm_circuit().lambda_matrix()


def _run_tomography(cfg: ExperimentConfig, threads: int) -> dict:
    target = kraus_to_chi(build_channel(cfg.channel))
    lam = _tomography_lambda(cfg)
    counts = protocols.simulate_counts(lam, lam.probabilities(target), cfg.shots, cfg.seed)
    if cfg.estimator == "mle":
        fit = estimation.mle_reconstruct(lam, counts)
        if not fit.converged:
            raise NumericalFailure(f"maximum-likelihood fit did not converge in {fit.iterations} iterations")
    else:
        fit = estimation.linear_invert(lam, counts)
    doc = {
        "chi": matrix_doc(fit.chi.chi),
        "target_chi": matrix_doc(target.chi),
        "lambda_condition_number": float(lam.condition_number),
        "counts": [c.to_dict() for c in counts],
        "estimator": {"method": fit.method, "iterations": int(fit.iterations), "converged": bool(fit.converged),
                      "log_likelihood": None if fit.log_likelihood is None else float(fit.log_likelihood),
                      "min_choi_eigenvalue": estimation.cptp_residuals(fit.chi)[0],
                      "tp_residual": estimation.cptp_residuals(fit.chi)[1],
                      "monotone": bool(fit.is_monotone)},
    }
    try:
        if cfg.estimator == "mle" and cfg.bootstrap_resamples:
            est = estimation.bootstrap_fidelity(lam, counts, target, cfg.bootstrap_resamples, cfg.seed, threads, fit)
            doc["fidelity"], doc["fidelity_std_error"] = est.fidelity, est.std_error
        else:
            doc["fidelity"], doc["fidelity_std_error"] = estimation.process_fidelity(fit.chi, target), None
    except NotPSDError:
        # Linear inversion can leave the physical set; it then has no fidelity.
        doc["fidelity"], doc["fidelity_std_error"] = None, None
    doc["bootstrap_resamples"] = int(cfg.bootstrap_resamples) if cfg.estimator == "mle" else 0
    return doc


def _relative(fitted, truth) -> float:
    return float(fitted / truth - 1)


def _run_relaxation(cfg: ExperimentConfig) -> dict:
    p = cfg.dcrt_params
    n = p["points_per_branch"]
    if cfg.protocol == "dcrt":
        times = p.get("times") or dcrt.dcrt_time_grid(p["T1"], p["T2"], n).tolist()
        series = dcrt.simulate_dcrt_series(p["T1"], p["T2"], p["a0"], p["N"], times, cfg.shots, cfg.seed)
        fit = dcrt.fit_relaxation(series, fix_a0=p["a0"], fit_a0=p["fit_a0"])
        if not fit.converged:
            raise NumericalFailure("relaxation fit did not converge")
        return {"fit": fit.to_dict(),
                "relative_error": {"T1": _relative(fit.T1, p["T1"]), "T2": _relative(fit.T2, p["T2"])},
                "series": {"times": series.times.tolist(), "counts": series.counts.tolist()}}
    if cfg.protocol == "ramsey":
        times = p.get("times") or dcrt.geometric_grid(p["T2"], n).tolist()
        series = dcrt.simulate_ramsey(p["T2"], times, shots=cfg.shots, seed=cfg.seed)
        fit = dcrt.fit_ramsey(series)
        truth, key, signal = p["T2"], "T2", series.contrast
    else:
        times = p.get("times") or dcrt.geometric_grid(p["T1"], n).tolist()
        series = dcrt.simulate_spontaneous_decay(p["T1"], times, shots=cfg.shots, seed=cfg.seed)
        fit = dcrt.fit_spontaneous_decay(series)
        truth, key, signal = p["T1"], "T1", series.survival
    if not fit.converged:
        raise NumericalFailure("exponential fit did not converge")
    return {"fit": {key: fit.tau, f"{key}_err": fit.tau_err, "residual_norm": fit.residual_norm,
                    "converged": bool(fit.converged)},
            "relative_error": {key: _relative(fit.tau, truth)},
            "series": {"times": list(map(float, series.times)), "signal": signal.tolist()}}


def run(cfg: ExperimentConfig, threads: int = 1, record_runtime: bool = True) -> dict:
    """Execute the configured pipeline and return the result document.

    :param record_runtime: store wall-clock seconds in ``runtime_s`` (``None`` otherwise,
        which makes repeat runs byte-identical).
    :raises NumericalFailure: singular Lambda or a non-convergent fit.
    """
    start = time.perf_counter()
    try:
        if cfg.protocol in TOMOGRAPHY:
            body = _run_tomography(cfg, threads)
        else:
            body = _run_relaxation(cfg)
    except (DegenerateConfigurationError, ConstructionError) as exc:
        raise NumericalFailure(str(exc)) from None
    doc = {"schema_version": RESULT_SCHEMA_VERSION, "toolkit_version": __version__, "protocol": cfg.protocol,
           "seed": cfg.seed, "shots": cfg.shots, "config": cfg.to_dict(), **body}
    doc["runtime_s"] = time.perf_counter() - start if record_runtime else None
    return doc


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ----------------------------------------------------------------------------------------------
# Bloch export


BLOCH_COLUMNS = ("kind", "label", "x_in", "y_in", "z_in", "x_out", "y_out", "z_out")


def load_chi_document(path) -> ProcessMatrix:
    """Read a single-qubit chi from a result document or a bare ``{"real", "imag"}`` object."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path} is not valid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise DomainError("chi document must be a JSON object")
    chi = ProcessMatrix(matrix_from_doc(doc.get("chi", doc)))
    if chi.num_qubits != 1:
        raise DomainError("the Bloch picture needs a single-qubit chi (4x4)")
    return chi.validate()


def bloch_rows(chi: ProcessMatrix, resolution: int = 16) -> list:
    rows = [("sample", str(k), *a, *b) for k, (a, b) in enumerate(bloch_ellipsoid(chi, resolution))]
    rows += [("axis", label, *src, *img) for (label, img), src in
             zip(bloch_axes(chi).items(), [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)])]
    return rows


def write_bloch_csv(rows, out) -> None:
    w = csv.writer(out)
    w.writerow(BLOCH_COLUMNS)
    for r in rows:
        w.writerow([r[0], r[1], *(repr(float(x)) for x in r[2:])])


# ----------------------------------------------------------------------------------------------
# Entry point


def _threads(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(THREADS_ENV)
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"must be a positive integer, got {env!r}") from None
    if n < 1:
        raise ConfigError(THREADS_ENV, "must be a positive integer")
    return n


def _positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _emit(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcqd-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override the configuration seed")
    p.add_argument("--out", help="result path (default: config output_path, else stdout)")
    p.add_argument("--threads", type=_positive_int, help=f"worker threads (fallback: ${THREADS_ENV})")
    p.add_argument("--no-runtime", action="store_true", help="omit wall-clock runtime for byte-stable output")

    p = sub.add_parser("validate", help="check a configuration without running it")
    p.add_argument("--config", required=True)

    p = sub.add_parser("fit", help="fit T1 and T2 to a stored decay-series CSV")
    p.add_argument("series")
    p.add_argument("--N", type=int, default=2, choices=(1, 2))
    p.add_argument("--a0", type=float, default=1.0)
    p.add_argument("--fit-a0", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("export-bloch", help="write Bloch-sphere input/output point pairs as CSV")
    p.add_argument("chi_file")
    p.add_argument("--resolution", type=int, default=16)
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.protocol} configuration is valid")
            return EXIT_OK
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                if args.seed < 0:
                    raise ConfigError("--seed", "must be non-negative")
                cfg = parse_config({**cfg.to_dict(), "seed": args.seed})
            doc = run(cfg, _threads(args.threads), record_runtime=not args.no_runtime)
            _emit(dumps(doc), args.out or cfg.output_path)
            return EXIT_OK
        if args.command == "fit":
            if not 0 <= args.a0 <= 1:
                raise ConfigError("--a0", "must lie in [0, 1]")
            series = dcrt.DecaySeries.from_csv(args.series, N=args.N)
            fit = dcrt.fit_relaxation(series, fix_a0=args.a0, fit_a0=args.fit_a0)
            _emit(json.dumps(fit.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
            return EXIT_OK if fit.converged else EXIT_NUMERICAL
        if args.command == "export-bloch":
            chi = load_chi_document(args.chi_file)
            rows = bloch_rows(chi, args.resolution)
            if args.out in (None, "-"):
                write_bloch_csv(rows, sys.stdout)
            else:
                with open(args.out, "w", newline="") as fh:
                    write_bloch_csv(rows, fh)
            return EXIT_OK
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DomainError, PhysicalityError, InsufficientDataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, NotPSDError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    raise AssertionError(args.command)  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
