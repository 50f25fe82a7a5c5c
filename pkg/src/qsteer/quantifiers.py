"""Fidelity, trace distance and linear entropy for qubit states."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .qmat import bloch_from_density, direction


class QuantifierTriple(NamedTuple):
    fidelity: float
    trace_distance: float
    linear_entropy: float


DET_FLOOR = 1e-15


def _det(rho):
    return (rho[..., 0, 0] * rho[..., 1, 1] - rho[..., 0, 1] * rho[..., 1, 0]).real


def fidelity(rho: np.ndarray, omega: np.ndarray):
    """Uhlmann fidelity (squared convention) via the 2x2 closed form.

    F = Tr(rho omega) + 2 sqrt(det rho det omega). Determinants at round-off
    level (pure states) are snapped to zero, since the square root would
    otherwise amplify 1e-17 into a 1e-9 error.
    """
    overlap = np.einsum("...ij,...ji->...", rho, omega).real
    d1, d2 = _det(rho), _det(omega)
    dets = np.where(d1 > DET_FLOOR, d1, 0.0) * np.where(d2 > DET_FLOOR, d2, 0.0)
    return np.clip(overlap + 2 * np.sqrt(dets), 0.0, 1.0)


def trace_distance(rho: np.ndarray, omega: np.ndarray):
    """Half the trace norm of rho - omega, i.e. half the Bloch distance."""
    d = bloch_from_density(rho) - bloch_from_density(omega)
    return 0.5 * np.linalg.norm(d, axis=-1)


def linear_entropy(rho: np.ndarray):
    return 1.0 - np.einsum("...ij,...ji->...", rho, rho).real


def target_metrics(rho: np.ndarray, target: tuple[float, float] | None = None) -> QuantifierTriple:
    """Quantifiers of ``rho`` against the pure target |up><up|.

    With the target at the north pole F = zeta and D = sqrt((1 - zeta)^2 + |chi|^2).
    ``target=(theta, phi)`` compares against R(theta, phi)|up> instead.
    """
    return QuantifierTriple(*bloch_metrics(bloch_from_density(rho), target))


def bloch_metrics(r, target: tuple[float, float] | None = None):
    """Vectorised (F, D, L) for Bloch vectors ``r`` of shape (..., 3)."""
    r = np.asarray(r, dtype=float)
    n = np.array([0.0, 0.0, 1.0]) if target is None else direction(*target)
    F = 0.5 * (1 + r @ n)
    D = 0.5 * np.linalg.norm(r - n, axis=-1)
    L = 0.5 * (1 - np.sum(r * r, axis=-1))
    return F, D, L
