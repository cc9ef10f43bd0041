"""
Maximum likelihood and bootstrap error bars
===========================================

Linear inversion of finite-shot data can leave the physical set; the likelihood fit
cannot.  A parametric bootstrap gives the fidelity uncertainty.
"""
import numpy as np

from dcqd_lab import protocols
from dcqd_lab.channels import ChannelSpec, ProcessMatrix
from dcqd_lab.estimation import bootstrap_fidelity, cptp_residuals, linear_invert, mle_reconstruct

lam = protocols.build_lambda(protocols.prepare_probes())
target = ProcessMatrix.from_spec(ChannelSpec.of("rotation", theta=np.pi, phi=np.pi / 2))
counts = protocols.simulate_counts(lam, lam.probabilities(target), shots=250, seed=4)

lin = linear_invert(lam, counts)
print("linear inversion: smallest chi eigenvalue", np.linalg.eigvalsh(lin.chi.chi).min())

fit = mle_reconstruct(lam, counts)
lo, tp = cptp_residuals(fit.chi)
print("MLE: smallest Choi eigenvalue", lo, " trace-preservation residual", tp)
print("log-likelihood rises monotonically:", fit.is_monotone, "over", fit.iterations, "iterations")

est = bootstrap_fidelity(lam, counts, target, resamples=50, seed=4, threads=2, fit=fit)
print(f"fidelity {est.fidelity:.4f} +- {est.std_error:.4f} ({est.bootstrap_samples} resamples)")
