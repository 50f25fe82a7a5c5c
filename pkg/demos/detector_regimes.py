"""A detector that starts slightly rotated away from |0>.

The mixed initial detector state adds a coherent drive of strength kappa to the
ideal damping. Below kappa = gamma/8 the Bloch vector creeps into place, above
it the approach rings. Stationary states of all strengths lie on one ellipsoid
fixed by the detector population a.
"""

import numpy as np

from qsteer.static_detector_error import (
    ErroneousChannelParams, analytic_solution, damping_regime, ellipsoid_residual, stationary_bloch,
)

gamma, a = 1.0, 0.8
t = np.linspace(0, 12, 7)
for kappa in (0.05, gamma / 8, 0.6):
    p = ErroneousChannelParams(gamma, kappa, a)
    reg = damping_regime(p)
    z = analytic_solution([0.0, 0.0, -1.0], p, t)[:, 2]
    print(f"kappa = {kappa:.3f}  {reg.tag.name:<12} z(t) = " + " ".join(f"{v:+.3f}" for v in z))

print("\nkappa   stationary (x, y, z)          ellipsoid residual")
for kappa in (0.1, 0.5, 1.0, 3.0):
    r = stationary_bloch(ErroneousChannelParams(gamma, kappa, a))
    print(f"{kappa:<6}  ({r[0]:+.4f}, {r[1]:+.4f}, {r[2]:+.4f})   {ellipsoid_residual(r, a):.1e}")
