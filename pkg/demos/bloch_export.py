"""
Bloch-sphere picture of a process
=================================

A single-qubit process maps the Bloch sphere onto an ellipsoid; the export writes
input/output point pairs for external plotting.
"""
import io

import numpy as np

from dcqd_lab import cli
from dcqd_lab.channels import ChannelSpec, ProcessMatrix, bloch_axes, bloch_ellipsoid

for kind, p in [("phase_damping", 0.6), ("amplitude_damping", 0.6), ("amplitude_damping", 1.0)]:
    chi = ProcessMatrix.from_spec(ChannelSpec.of(kind, p=p))
    pts = np.array([out for _, out in bloch_ellipsoid(chi, resolution=17)])
    print(f"{kind}({p}): output extents x {np.ptp(pts[:, 0]) / 2:.2f}, z {np.ptp(pts[:, 2]) / 2:.2f}")
    print("  image of +z:", np.round(bloch_axes(chi)["+z"], 3), " image of +x:", np.round(bloch_axes(chi)["+x"], 3))

buf = io.StringIO()
cli.write_bloch_csv(cli.bloch_rows(chi, resolution=8), buf)
print(buf.getvalue().splitlines()[0])
print(buf.getvalue().splitlines()[1])
