"""Erroneously initialised detector.

A detector prepared in

    rho_d = [[a, b], [conj(b), 1 - a]],   b = |b| e^{i phi},

instead of |up><up| yields, in the weak-measurement limit with
kappa = lim J |b|, the Lindbladian

    L rho = -i kappa [h, rho] + a gamma D(s+) rho + (1 - a) gamma D(s-) rho,
    h = e^{i phi} s+ + e^{-i phi} s-.

In Bloch form, with u = x sin(phi) + y cos(phi) and v = x cos(phi) - y sin(phi):

    dv/dt = -gamma v / 2
    du/dt = -gamma u / 2 - 2 kappa z
    dz/dt = gamma (2a - 1) - gamma z + 2 kappa u

so v decouples and (u, z) form a damped oscillator with rates
Omega_pm = -3 gamma / 4 pm sqrt(gamma^2 / 16 - 4 kappa^2).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .protocol_ideal import JumpChannel
from .qmat import SM, SP, commutator, density_from_bloch, dissipator, dag
from .quantifiers import QuantifierTriple
from .stoch import Stepper

CRITICAL_TOL = 1e-12
IMAG_TOL = 1e-10


@dataclass(frozen=True)
class DetectorState:
    a: float
    b_abs: float
    phi: float

    def __post_init__(self):
        if not 0 <= self.a <= 1:
            raise ValueError("a must lie in [0, 1]")
        if self.b_abs < 0:
            raise ValueError("|b| must be non-negative")
        if self.b_abs ** 2 > self.a * (1 - self.a) + 1e-12:
            raise ValueError("detector state is not positive: |b|^2 > a(1 - a)")

    def density(self) -> np.ndarray:
        b = self.b_abs * np.exp(1j * self.phi)
        return np.array([[self.a, b], [np.conj(b), 1 - self.a]], dtype=complex)


@dataclass(frozen=True)
class ErroneousChannelParams:
    gamma: float
    kappa: float
    a: float
    phi: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if not 0 <= self.a <= 1:
            raise ValueError("a must lie in [0, 1]")

    @property
    def gamma_plus(self) -> float:
        return self.a * self.gamma

    @property
    def gamma_minus(self) -> float:
        return (1 - self.a) * self.gamma

    @property
    def h(self) -> np.ndarray:
        return np.exp(1j * self.phi) * SP + np.exp(-1j * self.phi) * SM


class Regime(enum.Enum):
    Overdamped = "Overdamped"
    Underdamped = "Underdamped"
    Critical = "Critical"


@dataclass(frozen=True)
class DampingRegime:
    tag: Regime
    omega_plus: complex
    omega_minus: complex
    lam: float


class RegimeError(ValueError):
    pass


def erroneous_rhs(rho: np.ndarray, p: ErroneousChannelParams) -> np.ndarray:
    return (-1j * p.kappa * commutator(p.h, rho)
            + p.gamma_plus * dissipator(SP, rho)
            + p.gamma_minus * dissipator(SM, rho))


def bloch_rhs(r, p: ErroneousChannelParams) -> np.ndarray:
    x, y, z = r
    g, k, s, c = p.gamma, p.kappa, np.sin(p.phi), np.cos(p.phi)
    return np.array([
        -g * x / 2 - 2 * k * z * s,
        -g * y / 2 - 2 * k * z * c,
        g * (2 * p.a - 1) - g * z + 2 * k * (y * c + x * s),
    ])


def lam(p: ErroneousChannelParams) -> float:
    g, k = p.gamma, p.kappa
    return (g * g * p.a + 4 * k * k) / (g * g + 8 * k * k)


def damping_regime(p: ErroneousChannelParams) -> DampingRegime:
    g, k = p.gamma, p.kappa
    root = np.sqrt(complex((g / 4) ** 2 - 4 * k * k))
    if abs(k - g / 8) < CRITICAL_TOL * g:
        tag = Regime.Critical
        root = 0j
    elif k > g / 8:
        tag = Regime.Underdamped
    else:
        tag = Regime.Overdamped
    return DampingRegime(tag, root - 0.75 * g, -root - 0.75 * g, lam(p))


def _is_overdamped(reg: DampingRegime) -> bool:
    return reg.tag is Regime.Overdamped


def _rotate_in(r0, phi):
    x, y, z = r0
    return x * np.sin(phi) + y * np.cos(phi), x * np.cos(phi) - y * np.sin(phi), z


def _rotate_out(u, v, phi):
    return u * np.sin(phi) + v * np.cos(phi), u * np.cos(phi) - v * np.sin(phi)


def analytic_solution(r0, p: ErroneousChannelParams, t) -> np.ndarray:
    """Closed-form Bloch trajectory for any of the three damping regimes.

    Generic case (Omega_+ != Omega_-):

        z = 2 [C1 e^{W+ t} + C2 e^{W- t} + lam] - 1
        kappa u = C1 (W+ + gamma) e^{W+ t} + C2 (W- + gamma) e^{W- t} + gamma (lam - a)
        kappa v = C3 e^{-gamma t / 2}

    with the constants solved numerically from r(0) = r0. The critical case
    replaces the exponential pair by (C1 + C2 t) e^{-3 gamma t / 4}. kappa = 0
    decouples everything and is handled directly.
    """
    t = np.asarray(t, dtype=float)
    g, k, a = p.gamma, p.kappa, p.a
    u0, v0, z0 = _rotate_in(np.asarray(r0, dtype=float), p.phi)
    if k == 0:
        zinf = 2 * a - 1
        u = u0 * np.exp(-g * t / 2)
        v = v0 * np.exp(-g * t / 2)
        z = zinf + (z0 - zinf) * np.exp(-g * t)
    else:
        reg = damping_regime(p)
        L = reg.lam
        v = v0 * np.exp(-g * t / 2)
        if reg.tag is Regime.Critical:
            w = -0.75 * g
            c1 = (z0 + 1) / 2 - L
            c2 = k * u0 - (w + g) * c1 - g * (L - a)
            e = np.exp(w * t)
            z = 2 * ((c1 + c2 * t) * e + L) - 1
            u = (((w + g) * (c1 + c2 * t) + c2) * e + g * (L - a)) / k
        else:
            wp, wm = reg.omega_plus, reg.omega_minus
            # W_pm + gamma = gamma/4 pm root. Everything multiplying u is kept
            # divided by kappa (suffix _k) so that kappa -> 0 never divides.
            root = wp + 0.75 * g
            sp = 0.25 * g + root
            sm_k = 4 * k / sp if _is_overdamped(reg) else (0.25 * g - root) / k
            sm = k * sm_k
            if abs(sp - sm) < 1e-14 * g:
                raise RegimeError("Omega_+ = Omega_-: parameters are critical, reclassify the regime")
            l_k = 4 * k * (1 - 2 * a) / (g * g + 8 * k * k)
            r1 = complex((z0 + 1) / 2 - L)
            c1_k = (u0 - g * l_k - sm_k * r1) / (sp - sm)
            c2 = r1 - k * c1_k
            ep, em = np.exp(wp * t), np.exp(wm * t)
            zc = 2 * (k * c1_k * ep + c2 * em + L) - 1
            uc = c1_k * sp * ep + c2 * sm_k * em + g * l_k
            scale = 1 + np.max(np.abs(zc)) + np.max(np.abs(uc))
            if max(np.max(np.abs(zc.imag)), np.max(np.abs(uc.imag))) > IMAG_TOL * scale:
                raise RegimeError("complex residue in reconstructed Bloch vector")
            z, u = zc.real, uc.real
    x, y = _rotate_out(u, v, p.phi)
    return np.stack([x, y, z], axis=-1)


def critical_solution_transcribed(r0, p: ErroneousChannelParams, t, z_offset_sign: float = 1.0):
    """Critically damped closed form as printed in the literature, term by term.

    The printed offset of z reads 8(1 - 2a)/9; ``z_offset_sign=-1`` reproduces
    that literally, while the default uses 8(2a - 1)/9, the value consistent
    with both z(0) = z0 and the stationary state. Kept for cross-checking
    :func:`analytic_solution` at kappa = gamma / 8.
    """
    x0, y0, z0 = np.asarray(r0, dtype=float)
    g, a, phi = p.gamma, p.a, p.phi
    t = np.asarray(t, dtype=float)
    s, c = np.sin(phi), np.cos(phi)
    uu = x0 * s + y0 * c
    vv = x0 * c - y0 * s
    lin = 4 / 9 * (2 * a - 1) + g * t * ((2 * a - 1) / 3 - z0 / 4)
    cx = 0.25 * (g * t + 4) * uu * s + lin * s + np.exp(g * t / 4) * vv * c
    cy = 0.25 * (g * t + 4) * uu * c + lin * c + np.exp(g * t / 4) * (y0 * s - x0 * c) * s
    cz = 0.25 * g * t * uu + g * t * ((2 * a - 1) / 3 - z0 / 4) + z0 - 8 / 9 * (2 * a - 1)
    e = np.exp(-0.75 * g * t)
    x = 4 * (1 - 2 * a) / 9 * s + e * cx
    y = 4 * (1 - 2 * a) / 9 * c + e * cy
    z = z_offset_sign * 8 * (2 * a - 1) / 9 + e * cz
    return np.stack([x, y, z], axis=-1)


def stationary_bloch(p: ErroneousChannelParams) -> np.ndarray:
    g, k = p.gamma, p.kappa
    f = (2 * p.a - 1) * g / (g * g + 8 * k * k)
    return f * np.array([-4 * k * np.sin(p.phi), -4 * k * np.cos(p.phi), g])


def stationary_state(p: ErroneousChannelParams):
    """Stationary (density matrix, Bloch vector), built from the Bloch vector."""
    r = stationary_bloch(p)
    return density_from_bloch(r), r


def ellipsoid_residual(r, a: float) -> float:
    """Zero on the oblate ellipsoid swept by stationary states at fixed ``a``."""
    if not (0 < a < 1) or a == 0.5:
        raise ValueError("a must lie in (0, 1/2) or (1/2, 1)")
    x, y, z = np.asarray(r, dtype=float)
    h = a - 0.5
    return (x * x + y * y) / (2 * h * h) + (z - h) ** 2 / (h * h) - 1


def stationary_polar_angle(p: ErroneousChannelParams) -> float:
    g, k = p.gamma, p.kappa
    return float(np.arccos(np.sign(2 * p.a - 1) * g / np.sqrt(g * g + 16 * k * k)))


def stationary_quantifiers(p: ErroneousChannelParams, mode: str = "exact") -> QuantifierTriple:
    """Stationary (F, D1, L) against |up>; ``mode="series"`` gives the small-kappa truncation."""
    g, k, a = p.gamma, p.kappa, p.a
    if mode == "exact":
        den = g * g + 8 * k * k
        F = 0.5 + g * g * (2 * a - 1) / (2 * den)
        D = np.sqrt(((1 - a) * g * g + 4 * k * k) ** 2 + 4 * g * g * k * k * (2 * a - 1) ** 2) / den
        L = 1 - (g * g * (g * g + 16 * k * k) * (1 + 2 * (a - 1) * a) + 32 * k ** 4) / den ** 2
        return QuantifierTriple(float(F), float(D), float(L))
    if mode == "series":
        r = k / g
        F = a - 4 * (2 * a - 1) * r ** 2
        D = 1 - a + 2 * (2 * a - 1) * r ** 2 / (1 - a) if a < 1 else 2 * r
        L = 2 * a * (1 - a) + 32 * (1 - 2 * a) ** 2 * r ** 4
        return QuantifierTriple(float(F), float(D), float(L))
    raise ValueError("mode must be 'exact' or 'series'")


def detector_blind_step(rho: np.ndarray, detector: DetectorState, J: float, dt: float) -> np.ndarray:
    """Discrete blind step Tr_d[W (rho_d x rho) W^dagger], W = exp(-i J dt h0).

    h0 = |1><0| x s+ + h.c. in the (detector x system) ordering. As dt -> 0
    with J^2 dt = gamma and J |b| = kappa fixed this approaches the Lindbladian
    above.
    """
    h0 = np.kron(np.array([[0, 0], [1, 0]]), SP)
    h0 = h0 + dag(h0)
    W = expm(-1j * J * dt * h0)
    big = W @ np.kron(detector.density(), rho) @ dag(W)
    return np.einsum("aiaj->ij", big.reshape(2, 2, 2, 2))


class DetectorInitStepper(Stepper):
    """Jump unravelling of the erroneous channel.

    Clicks of either detector population are recorded alike, so a click lands on
    (a gamma s+ w s- + (1 - a) gamma s- w s+) / Tr. Between clicks the state
    follows exp(-(i kappa h + K/2) dt).
    """

    n_uniform = 1

    def __init__(self, p: ErroneousChannelParams):
        self.params = p
        self.channel = JumpChannel([(p.gamma_plus, SP), (p.gamma_minus, SM)], hamiltonian=p.kappa * p.h)

    def step(self, r, u, g, dt, diag):
        return self.channel(r, u[:, 0], dt, diag)
