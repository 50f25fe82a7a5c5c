"""Ideal steering: discrete generalized measurements, the jump SME and its Lindblad limit."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .qmat import SP, dag, dissipator, kraus_transfer, normalized
from .stoch import Diagnostics, RngStream, StepError, Stepper, bernoulli

MIN_CLICK_PROB = 1e-15
COUPLING_TOL = 1e-9


@dataclass(frozen=True)
class ProtocolParams:
    gamma: float
    dt: float

    def __post_init__(self):
        if not (self.gamma > 0 and self.dt > 0):
            raise ValueError("gamma and dt must be positive")

    @property
    def J(self) -> float:
        # J^2 dt = gamma holds by construction.
        return float(np.sqrt(self.gamma / self.dt))


def kraus_pair(J: float, dt: float):
    """Measurement operators for a detector prepared in |up>.

    M0 = diag(1, cos J dt) (no click), M1 = [[0, sin J dt], [0, 0]] (click).
    """
    if J < 0 or dt < 0:
        raise ValueError("J and dt must be non-negative")
    c, s = np.cos(J * dt), np.sin(J * dt)
    M0 = np.array([[1, 0], [0, c]], dtype=complex)
    M1 = np.array([[0, s], [0, 0]], dtype=complex)
    return M0, M1


class CouplingClass(enum.Enum):
    Valid = "Valid"
    PiMultiple = "PiMultiple"
    HalfPiOddMultiple = "HalfPiOddMultiple"


def _near_integer(v: float) -> int | None:
    k = round(v)
    return int(k) if abs(v - k) <= COUPLING_TOL else None


def classify_coupling(J: float, dt: float) -> CouplingClass:
    """Flag couplings with J dt a multiple of pi (no steering) or an odd multiple of pi/2.

    The second class is the strong-measurement limit: the detector swaps
    populations in one step and the protocol no longer works as a weak
    measurement.
    """
    if J < 0 or dt < 0:
        raise ValueError("J and dt must be non-negative")
    phase = J * dt
    if _near_integer(phase / np.pi) is not None:
        return CouplingClass.PiMultiple
    k = _near_integer(phase / (np.pi / 2))
    if k is not None and k % 2 == 1:
        return CouplingClass.HalfPiOddMultiple
    return CouplingClass.Valid


def discrete_step(rho: np.ndarray, J: float, dt: float, stream: RngStream | None = None):
    """One steering step with a detector measured in its canonical basis.

    With ``stream=None`` the readout is discarded and the blind update
    sum_a M_a rho M_a^dagger is returned with outcome ``"blind"``.
    Otherwise an outcome is sampled with P(a) = Tr[M_a rho M_a^dagger].
    """
    M0, M1 = kraus_pair(J, dt)
    rho = np.asarray(rho, dtype=complex)
    b0 = M0 @ rho @ dag(M0)
    b1 = M1 @ rho @ dag(M1)
    if stream is None:
        return "blind", b0 + b1
    p1 = float(np.trace(b1).real)
    # A click of negligible probability is treated as impossible.
    if p1 >= MIN_CLICK_PROB and stream.uniform() < p1:
        return 1, b1 / p1
    return 0, b0 / np.trace(b0).real


def blind_bloch_update(r, J: float, dt: float) -> np.ndarray:
    x, y, z = np.asarray(r, dtype=float)
    c = np.cos(J * dt)
    return np.array([c * x, c * y, 1 - c * c * (1 - z)])


def ideal_rhs(rho: np.ndarray, gamma: float, U: np.ndarray = SP) -> np.ndarray:
    return gamma * dissipator(U, rho)


def ideal_lindblad(r0, gamma: float, t) -> np.ndarray:
    """Closed-form Bloch vector of d rho/dt = gamma D(sigma+) rho; ``t`` may be an array."""
    x0, y0, z0 = np.asarray(r0, dtype=float)
    t = np.asarray(t, dtype=float)
    h = np.exp(-gamma * t / 2)
    return np.stack([x0 * h, y0 * h, 1 - (1 - z0) * np.exp(-gamma * t)], axis=-1)


class JumpChannel:
    """Jump unravelling of sum_j rate_j D(L_j) with a single detector click.

    No click: rho -> e^{-K dt/2} rho e^{-K dt/2} / Tr, K = sum_j rate_j L_j^dagger L_j,
    the exact solution over dt of the nonlinear no-click drift.
    Click, with probability dt Tr[K rho]: rho -> sum_j rate_j L_j rho L_j^dagger / Tr[K rho].
    An optional Hamiltonian H turns the no-click propagator into exp(-(i H + K/2) dt).
    """

    def __init__(self, ops, hamiltonian=None):
        self.ops = [(float(rate), np.asarray(L, dtype=complex)) for rate, L in ops]
        self.K = sum(rate * dag(L) @ L for rate, L in self.ops)
        self.T_click = sum(rate * kraus_transfer(L) for rate, L in self.ops)
        self.H = None if hamiltonian is None else np.asarray(hamiltonian, dtype=complex)

    @lru_cache(maxsize=8)
    def no_click_transfer(self, dt: float) -> np.ndarray:
        if self.H is None:
            return kraus_transfer(expm(-0.5 * dt * self.K))
        return kraus_transfer(expm(-dt * (1j * self.H + 0.5 * self.K)))

    def click_rate_dt(self, r, dt):
        return dt * (self.T_click[0, 0] + r @ self.T_click[0, 1:])

    def sample(self, r, u, dt, diag: Diagnostics):
        """Return (new Bloch vectors, boolean click mask)."""
        T0 = self.no_click_transfer(dt)
        q0 = T0[:, 0] + r @ T0[:, 1:].T
        q1 = self.T_click[:, 0] + r @ self.T_click[:, 1:].T
        rate_dt = np.maximum(dt * q1[:, 0], 0.0)
        click = bernoulli(u, rate_dt, diag) & (rate_dt >= MIN_CLICK_PROB)
        if not click.any():
            return normalized(q0), click
        if np.any(q1[click, 0] <= 0):
            raise StepError("click sampled from a dark state", np.flatnonzero(click & (q1[:, 0] <= 0)))
        safe = np.where(click, q1[:, 0], 1.0)[:, None]
        return np.where(click[:, None], q1[:, 1:] / safe, normalized(q0)), click

    def __call__(self, r, u, dt, diag: Diagnostics):
        return self.sample(r, u, dt, diag)[0]


class IdealJumpStepper(Stepper):
    """Jump SME of the ideal protocol: one uniform per step."""

    n_uniform = 1

    def __init__(self, gamma: float, U: np.ndarray = SP):
        self.gamma = gamma
        self.channel = JumpChannel([(gamma, U)])

    def step(self, r, u, g, dt, diag):
        return self.channel(r, u[:, 0], dt, diag)


def wm_jump_step(omega: np.ndarray, gamma: float, dt: float, stream: RngStream) -> np.ndarray:
    return IdealJumpStepper(gamma).single(omega, dt, stream)
