"""Two tilted steering directions, three levels of averaging, one Lindbladian.

Run with ``python demos/steering_hierarchies.py``. The script draws ensembles
at each averaging level and prints how far their means sit from the exact
flow, in units of the standard error.
"""

import numpy as np

from qsteer.direction_errors import (
    ClickAvgStepper, DirAvgStepper, FullStepper, SYMMETRIC_PAIR, avg_lindblad_solution, two_dir_stationary,
)
from qsteer.stoch import TimeGrid, run_ensemble

GAMMA = 0.1
R0 = np.array([1.0, 0.0, -1.0]) / np.sqrt(2)
grid = TimeGrid(0.05, 1200)
exact = avg_lindblad_solution(R0, SYMMETRIC_PAIR, GAMMA, grid.times)

print("level       worst |mean - exact| / SE   final z")
for name, cls in [("full", FullStepper), ("dir_avg", DirAvgStepper), ("click_avg", ClickAvgStepper)]:
    stats = run_ensemble(cls(SYMMETRIC_PAIR, GAMMA), R0, grid, 2000, seed=1)
    z = np.abs(stats.mean - exact)[1:] / np.maximum(stats.se[1:], 1e-15)
    print(f"{name:<10}  {np.max(z[:, [0, 2]]):>10.2f}                 {stats.mean[-1, 2]:.4f}")

_, quant, series = two_dir_stationary(0.5, np.pi / 3)
print(f"\nstationary F, D, L at theta = pi/3: {quant.fidelity:.4f}, {quant.trace_distance:.4f}, {quant.linear_entropy:.4f}")
print(f"small-angle series at the same point: {series.fidelity:.4f}, {series.trace_distance:.4f}, {series.linear_entropy:.4f}")
