"""Measurement-based steering of a single qubit toward a target state.

Discrete generalized measurements, their stochastic-master-equation limits and
the averaged Lindblad dynamics, together with static and dynamic error models.
"""

__version__ = "0.1.0"
