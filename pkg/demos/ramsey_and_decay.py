"""
The traditional one-observable baselines
========================================

Ramsey fringes give T2 from the contrast decay, spontaneous decay of two excited ions
gives T1 from the survival probability exp(-2t/T1).
"""
from dcqd_lab import dcrt

T1, T2 = 1.130, 0.0188

ramsey = dcrt.simulate_ramsey(T2, dcrt.geometric_grid(T2, 12), shots=250, seed=0)
print("Ramsey contrast:", ramsey.contrast.round(3))
fit = dcrt.fit_ramsey(ramsey)
print(f"Ramsey T2 = {fit.tau * 1e3:.2f} +- {fit.tau_err * 1e3:.2f} ms")

decay = dcrt.simulate_spontaneous_decay(T1, dcrt.geometric_grid(T1, 12), shots=250, seed=0)
print("survival:", decay.survival.round(3))
fit = dcrt.fit_spontaneous_decay(decay)
print(f"decay T1 = {fit.tau * 1e3:.0f} +- {fit.tau_err * 1e3:.0f} ms")
