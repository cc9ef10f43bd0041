"""
Standard process tomography for comparison
===========================================

Four input states, three Pauli readouts each: twelve configurations instead of four.
"""
import numpy as np

from dcqd_lab import protocols
from dcqd_lab.channels import ChannelSpec, ProcessMatrix
from dcqd_lab.estimation import linear_invert, mle_reconstruct, process_fidelity

lam = protocols.sqpt_lambda()
print("configurations:", len(lam.configurations), " cond:", round(lam.condition_number, 3))

target = ProcessMatrix.from_spec(ChannelSpec.of("phase_damping", p=0.6))
# p[input, basis, outcome] for inputs |0>, |1>, |+>, |+i> and bases x, y, z
print(np.round(protocols.sqpt_probabilities(target), 3))

exact = linear_invert(lam, lam.probabilities(target))
print("exact-regime fidelity:", process_fidelity(exact.chi, target))

# same total budget as four DCQD configurations of 250 shots
counts = protocols.simulate_counts(lam, lam.probabilities(target), shots=1000 // 12, seed=2)
fit = mle_reconstruct(lam, counts)
print("MLE fidelity:", round(process_fidelity(fit.chi, target), 4))
