"""Reading the detector in a random basis.

With probability p1 the detector is read out in the canonical basis, and a
click is a quantum jump. Otherwise it is read out in |+->, where each outcome
nudges the state only slightly. Trajectories look completely different but
their average does not.
"""

import numpy as np

from qsteer.measurement_basis_errors import HybridStepper
from qsteer.protocol_ideal import ideal_lindblad
from qsteer.stoch import TimeGrid, run_ensemble

r0 = [0.6, 0.0, -0.8]
grid = TimeGrid(0.01, 1000)
ref = ideal_lindblad(r0, 0.5, grid.times)
for p1 in (1.0, 0.5, 0.0):
    stats = run_ensemble(HybridStepper(p1, 0.5), r0, grid, 1000, seed=5, keep_paths=True)
    step = np.abs(np.diff(stats.paths[:, 0, 2]))
    # Absolute gap: right after t = 0 clicks are rare and the sample SE is unreliable.
    dev = np.max(np.abs(stats.mean - ref))
    print(f"p1 = {p1:.1f}: largest single-step change of z on one path {step.max():.3f}, "
          f"max |mean - Lindblad| {dev:.3f}")
