"""
T1 and T2 from one experimental configuration
=============================================

A Bell pair relaxes for a time t and is read out in the Bell basis.  The Phi+ minus Phi-
population gives the (N^2-enhanced) dephasing, the Psi populations give the energy
relaxation.
"""
import numpy as np

from dcqd_lab import dcrt

T1, T2 = 1.130, 0.0188
grid = dcrt.dcrt_time_grid(T1, T2, points_per_branch=12)
print(f"{grid.size} exposure times from {grid[0] * 1e3:.2f} ms to {grid[-1]:.2f} s")

# the two combinations against their closed forms
exact = dcrt.simulate_dcrt_series(T1, T2, a0=1.0, N=2, times=grid)
print("dephasing residual: ", np.abs(exact.dephasing - dcrt.dephasing_signal(grid, T2)).max())
print("population residual:", np.abs(exact.population - dcrt.population_signal(grid, T1)).max())

fit = dcrt.fit_relaxation(exact)
print(f"noiseless fit: T1 = {fit.T1 * 1e3:.2f} ms, T2 = {fit.T2 * 1e3:.3f} ms")

# 250 shots per time point
noisy = dcrt.simulate_dcrt_series(T1, T2, 1.0, 2, grid, shots=250, seed=0)
fit = dcrt.fit_relaxation(noisy)
print(f"250 shots: T1 = {fit.T1 * 1e3:.0f} +- {fit.T1_err * 1e3:.0f} ms, "
      f"T2 = {fit.T2 * 1e3:.2f} +- {fit.T2_err * 1e3:.2f} ms")

# spread over seeds; the relative sd is close to the information limit of this design
fits = [dcrt.fit_relaxation(dcrt.simulate_dcrt_series(T1, T2, 1.0, 2, grid, shots=250, seed=s))
        for s in range(50)]
r1 = np.array([f.T1 for f in fits]) / T1 - 1
r2 = np.array([f.T2 for f in fits]) / T2 - 1
print(f"relative sd over 50 seeds: T1 {r1.std():.3f}, T2 {r2.std():.3f}")
print(f"within 10%: T1 {np.mean(abs(r1) <= 0.1):.0%}, T2 {np.mean(abs(r2) <= 0.1):.0%}")

# the series round-trips through the CSV format read by `dcqd-lab fit`
noisy.to_csv("decay_series.csv")
print("wrote decay_series.csv")
