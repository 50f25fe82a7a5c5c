"""Qubit matrix algebra: density matrices, Bloch vectors, rotations, jump operators.

Density matrices are plain complex ``(2, 2)`` numpy arrays written as

    rho = [[zeta, chi], [conj(chi), 1 - zeta]]

so that the Bloch vector is ``(2 Re chi, -2 Im chi, 2 zeta - 1)`` and the
target state ``|up><up|`` sits at the north pole.

Ensemble code works on batches of Bloch vectors and on 4x4 real Pauli transfer
matrices acting on homogeneous coordinates ``q = (1, x, y, z)``. Any linear
map of density matrices becomes a real matrix in that picture, so Hermiticity
and trace bookkeeping are structural rather than enforced after the fact.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

POSITIVITY_TOL = 1e-10
TRACE_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
# sigma^+ = |up><down| raises toward the target |up>.
SP = np.array([[0, 1], [0, 0]], dtype=complex)
SM = SP.conj().T
PAULI = (I2, SX, SY, SZ)

UP = np.array([1, 0], dtype=complex)
DOWN = np.array([0, 1], dtype=complex)
RHO_TARGET = np.outer(UP, UP.conj())


class UnphysicalStateError(ValueError):
    """Raised when a state leaves the Bloch ball beyond tolerance."""


def dag(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(np.conj(a), -1, -2)


def density_matrix(zeta: float, chi: complex) -> np.ndarray:
    """Build rho from its population ``zeta`` and coherence ``chi``."""
    return np.array([[zeta, chi], [np.conj(chi), 1.0 - zeta]], dtype=complex)


def bloch_from_density(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    zeta = rho[..., 0, 0].real
    chi = rho[..., 0, 1]
    return np.stack([2 * chi.real, -2 * chi.imag, 2 * zeta - 1], axis=-1)


def density_from_bloch(r) -> np.ndarray:
    """Inverse of :func:`bloch_from_density`; rejects vectors outside the ball."""
    r = np.asarray(r, dtype=float)
    norm = np.linalg.norm(r, axis=-1)
    if np.any(norm > 1 + POSITIVITY_TOL):
        raise UnphysicalStateError(f"Bloch vector norm {np.max(norm):.3e} exceeds 1")
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    rho = np.empty(r.shape[:-1] + (2, 2), dtype=complex)
    rho[..., 0, 0] = (1 + z) / 2
    rho[..., 1, 1] = (1 - z) / 2
    rho[..., 0, 1] = (x - 1j * y) / 2
    rho[..., 1, 0] = (x + 1j * y) / 2
    return rho


def validate_density(rho: np.ndarray, tol: float = POSITIVITY_TOL) -> np.ndarray:
    """Check Hermiticity, unit trace and positivity; return the array unchanged."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (2, 2):
        raise ValueError(f"expected a 2x2 density matrix, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise UnphysicalStateError("density matrix has non-finite entries")
    if np.max(np.abs(rho - dag(rho))) > tol:
        raise UnphysicalStateError("density matrix is not Hermitian")
    tr = np.trace(rho, axis1=-2, axis2=-1).real
    if np.any(np.abs(tr - 1) > tol):
        raise UnphysicalStateError(f"trace {tr} differs from 1")
    if np.any(np.linalg.eigvalsh(rho)[..., 0] < -tol):
        raise UnphysicalStateError("density matrix has a negative eigenvalue")
    return rho


def pure_density(ket) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    ket = ket / np.linalg.norm(ket)
    return np.outer(ket, ket.conj())


def rotation(theta: float, phi: float) -> np.ndarray:
    """R(theta, phi) = exp(-i phi sz / 2) exp(-i theta sy / 2)."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    ry = np.array([[c, -s], [s, c]], dtype=complex)
    rz = np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])
    return rz @ ry


def direction(theta: float, phi: float) -> np.ndarray:
    """Bloch vector of R(theta, phi)|up>."""
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def rotated_jump(theta: float, phi: float, U: np.ndarray = SP) -> np.ndarray:
    """Jump operator R U R^dagger that steers toward R|up>.

    ``U`` must annihilate |up> and satisfy U U^dagger |up> = |up>.
    """
    U = np.asarray(U, dtype=complex)
    if np.linalg.norm(U @ UP) > POSITIVITY_TOL or np.linalg.norm(U @ dag(U) @ UP - UP) > POSITIVITY_TOL:
        raise ValueError("jump operator must annihilate |up> and map onto it")
    R = rotation(theta, phi)
    return R @ U @ dag(R)


def commutator(a, b):
    return a @ b - b @ a


def anticommutator(a, b):
    return a @ b + b @ a


def dissipator(U: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """D(U) rho = U rho U^dagger - {U^dagger U, rho} / 2."""
    UdU = dag(U) @ U
    return U @ rho @ dag(U) - 0.5 * anticommutator(UdU, rho)


def expect(op: np.ndarray, rho: np.ndarray):
    """Tr[op rho], batched over leading axes of ``rho``."""
    return np.einsum("ij,...ji->...", op, rho)


# Pauli transfer matrices -------------------------------------------------

def transfer_matrix(linear_map) -> np.ndarray:
    """Real 4x4 matrix of a Hermiticity-preserving linear map on 2x2 matrices.

    Entry (i, j) is Tr[s_i f(s_j)] / 2 with s = (I, sx, sy, sz), so that the
    homogeneous Bloch vector (Tr rho, x, y, z) maps linearly.
    """
    T = np.empty((4, 4))
    for j, sj in enumerate(PAULI):
        out = linear_map(sj)
        for i, si in enumerate(PAULI):
            T[i, j] = 0.5 * np.trace(si @ out).real
    return T


def kraus_transfer(M: np.ndarray) -> np.ndarray:
    """Transfer matrix of rho -> M rho M^dagger (unnormalized)."""
    M = np.asarray(M, dtype=complex)
    return transfer_matrix(lambda s: M @ s @ dag(M))


def cross_transfer(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Transfer matrix of rho -> A rho B^dagger + B rho A^dagger."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    return transfer_matrix(lambda s: A @ s @ dag(B) + B @ s @ dag(A))


def generator_transfer(rhs) -> np.ndarray:
    """Transfer matrix of a Lindblad right-hand side ``rhs(rho)``."""
    return transfer_matrix(rhs)


def homogeneous(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return np.concatenate([np.ones(r.shape[:-1] + (1,)), r], axis=-1)


def apply_transfer(T: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Unnormalized homogeneous image ``T (1, r)`` for a batch ``r`` of shape (m, 3)."""
    return T[:, 0] + r @ T[:, 1:].T


def normalized(q: np.ndarray) -> np.ndarray:
    """Bloch vectors of homogeneous coordinates ``q`` (divides out the trace)."""
    return q[..., 1:] / q[..., :1]


def axis_rotate(r: np.ndarray, axis: np.ndarray, angle) -> np.ndarray:
    """Rotate Bloch vectors by ``angle`` about the unit ``axis`` (Rodrigues).

    This is the action of exp(-i angle axis.sigma / 2).
    """
    c = np.cos(angle)[..., None]
    s = np.sin(angle)[..., None]
    axis = np.asarray(axis, dtype=float)
    along = (r @ axis)[..., None] * axis
    return r * c + np.cross(axis, r) * s + along * (1 - c)


def pauli_decomposition(A: np.ndarray) -> np.ndarray:
    """Real coefficients (a0, ax, ay, az) of a Hermitian A = a0 I + a.sigma."""
    A = np.asarray(A, dtype=complex)
    if np.max(np.abs(A - dag(A))) > 1e-12:
        raise ValueError("operator is not Hermitian")
    return np.array([0.5 * np.trace(s @ A).real for s in PAULI])


def lindblad_stationary(G: np.ndarray) -> np.ndarray:
    """Stationary Bloch vector of a generator given as a transfer matrix."""
    return np.linalg.solve(G[1:, 1:], -G[1:, 0])


def lindblad_flow(G: np.ndarray, r0, t) -> np.ndarray:
    """Bloch vectors exp(G t)(1, r0) for scalar or array ``t``."""
    q0 = homogeneous(np.asarray(r0, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([expm(G * tk) @ q0 for tk in t])
    return out[:, 1:] / out[:, :1]
