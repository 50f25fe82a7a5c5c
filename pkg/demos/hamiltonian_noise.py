"""Environment noise on the detector-system Hamiltonian.

Only the detector blocks A and B of the perturbation survive averaging. Here a
sigma_x kick on the system (A = sx, B = 0) competes with the steering rate and
the stationary infidelity tracks gamma~/gamma for weak noise. The last part
checks that averaging over noise and tracing out the detector commute.
"""

import numpy as np

from qsteer.coupling_hamiltonian_errors import PerturbationBlocks, commutation_checks, stationary_quantifiers_sigma_x
from qsteer.qmat import SM, SX, SZ

print("gamma~/gamma   1 - F exact   1 - F leading")
for ratio in (0.001, 0.01, 0.1, 0.5):
    exact, lead = stationary_quantifiers_sigma_x(1.0, ratio)
    print(f"{ratio:<13}  {1 - exact.fidelity:.6f}      {1 - lead.fidelity:.6f}")

rep = commutation_checks(0.2, PerturbationBlocks(SX, 0.5 * SM, SZ), 0.1, 1.0, 20_000, seed=2)
for name, dev in rep.deviations().items():
    print(f"{name:<20} max deviation / SE = {np.max(dev / np.maximum(rep.se, 1e-15)):.2f}")
print(f"interaction-picture identity error {rep.identity_error:.1e}")
