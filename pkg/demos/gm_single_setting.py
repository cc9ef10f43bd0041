"""
Single-setting tomography with three ancillas
=============================================

One preparation and one four-qubit readout with 16 outcomes.  The circuit is a frozen
result of a seeded search over collective rotations, single-ion Z rotations and
Molmer-Sorensen gates.
"""
import numpy as np

from dcqd_lab import protocols
from dcqd_lab.channels import ChannelSpec, ProcessMatrix, build_channel
from dcqd_lab.estimation import mle_reconstruct, process_fidelity

circuit = protocols.gm_circuit()
lam = circuit.lambda_matrix()
print("register:", circuit.register, " system qubit:", circuit.system_index)
print("preparation gates:", len(circuit.preparation), " cond Lambda:", round(lam.condition_number, 3))

spec = ChannelSpec.of("rotation", theta=np.pi, phi=0.0)
model = protocols.gm_probabilities(ProcessMatrix.from_spec(spec), circuit)
direct = protocols.gm_probabilities_direct(build_channel(spec), circuit)
print("model vs four-qubit simulation, max deviation:", np.abs(model - direct).max())

# 5000 repetitions of the single configuration
for kind, params in [("identity", {}), ("rotation", {"theta": np.pi, "phi": 0.0}),
                     ("rotation", {"theta": np.pi, "phi": np.pi / 2}), ("z_rotation", {"theta": np.pi})]:
    target = ProcessMatrix.from_spec(ChannelSpec.of(kind, **params))
    counts = protocols.simulate_counts(lam, lam.probabilities(target), 5000, seed=3)
    print(kind, params, "fidelity", round(process_fidelity(mle_reconstruct(lam, counts).chi, target), 5))
