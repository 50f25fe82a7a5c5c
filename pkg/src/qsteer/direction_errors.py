"""Randomly fluctuating steering directions.

Each steering step aims at R(theta_i, phi_i)|up> with probability p_i. Three
unravelings differ in what is averaged before the state is updated:

* full: the direction and the detector click are both kept (pure states stay pure);
* dir_avg: the direction is averaged out, clicks remain (posteriors are mixed);
* click_avg: clicks are averaged out, the direction remains.

All of them average to the same Lindbladian sum_i gamma p_i D(U_i).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import ive, roots_legendre

from .protocol_ideal import MIN_CLICK_PROB, JumpChannel
from .qmat import (
    I2, SP, SX, SY, SZ, bloch_from_density, dag, density_from_bloch, direction, dissipator,
    generator_transfer, kraus_transfer, lindblad_flow, lindblad_stationary, normalized,
    rotated_jump,
)
from .quantifiers import QuantifierTriple, bloch_metrics
from .stoch import RngStream, StepError, Stepper, bernoulli, categorical, check_probs


class IsotropicSetError(ValueError):
    """The averaged no-click drift has no preferred axis, hence no unique fixed point."""


@dataclass(frozen=True)
class SteeringSet:
    entries: tuple

    def __init__(self, entries):
        entries = tuple((float(t), float(f), float(p)) for t, f, p in entries)
        if not entries:
            raise ValueError("steering set is empty")
        for theta, _, _ in entries:
            if not -np.pi - 1e-12 <= theta <= np.pi + 1e-12:
                raise ValueError(f"theta={theta} outside [-pi, pi]")
        check_probs([p for _, _, p in entries])
        object.__setattr__(self, "entries", entries)

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, _, p in self.entries])

    def jump_ops(self, U: np.ndarray = SP):
        return [rotated_jump(t, f, U) for t, f, _ in self.entries]

    def directions(self) -> np.ndarray:
        return np.array([direction(t, f) for t, f, _ in self.entries])


def two_direction_set(p: float, theta: float) -> SteeringSet:
    """{(theta, 0; p), (theta, pi; 1 - p)}, i.e. tilts of +-theta in the x-z plane."""
    return SteeringSet([(theta, 0.0, p), (theta, np.pi, 1 - p)])


SYMMETRIC_PAIR = two_direction_set(0.5, np.pi / 3)


def _subset_call(fn, rows, *args):
    try:
        return fn(*args)
    except StepError as exc:
        raise StepError(str(exc), np.flatnonzero(rows)[exc.rows]) from exc


class FullStepper(Stepper):
    """Direction drawn first, then a click of that direction's detector."""

    n_uniform = 2

    def __init__(self, steering: SteeringSet, gamma: float):
        self.steering = steering
        self.probs = steering.probs
        self.channels = [JumpChannel([(gamma, U)]) for U in steering.jump_ops()]

    def step(self, r, u, g, dt, diag):
        idx = categorical(u[:, 0], self.probs)
        out = np.empty_like(r)
        for i, ch in enumerate(self.channels):
            rows = idx == i
            if rows.any():
                out[rows] = _subset_call(ch, rows, r[rows], u[rows, 1], dt, diag)
        return out


class DirAvgStepper(Stepper):
    """Direction-averaged jump SME: one detector with jump operators sqrt(p_i) U_i."""

    n_uniform = 1

    def __init__(self, steering: SteeringSet, gamma: float):
        self.channel = JumpChannel([(gamma * p, U) for (_, _, p), U in zip(steering.entries, steering.jump_ops())])

    def step(self, r, u, g, dt, diag):
        return self.channel(r, u[:, 0], dt, diag)


class ClickAvgStepper(Stepper):
    """Random dissipator per step.

    The averaged drift is integrated exactly and the fluctuation of the drawn
    generator around it is added at first order, T_i = exp(G dt) + (G_i - G) dt
    with G the probability-weighted mean. The per-step noise is the same as a
    plain Euler step, but the ensemble-mean map has no O(dt) bias. Without the
    split, that bias dominates the very small spread of this hierarchy.
    """

    n_uniform = 1

    def __init__(self, steering: SteeringSet, gamma: float):
        self.probs = steering.probs
        self.generators = [gamma * generator_transfer(lambda s, U=U: dissipator(U, s)) for U in steering.jump_ops()]
        self.mean_generator = sum(p * G for p, G in zip(self.probs, self.generators))
        self._cache = {}

    def _maps(self, dt):
        if dt not in self._cache:
            drift = expm(dt * self.mean_generator)
            self._cache[dt] = [drift + dt * (G - self.mean_generator) for G in self.generators]
        return self._cache[dt]

    def step(self, r, u, g, dt, diag):
        idx = categorical(u[:, 0], self.probs)
        out = np.empty_like(r)
        for i, T in enumerate(self._maps(dt)):
            rows = idx == i
            if rows.any():
                q = T[:, 0] + r[rows] @ T[:, 1:].T
                out[rows] = normalized(q)
        return out


class MultiNoiseStepper(Stepper):
    """Single detector coupled through N independent white noises, one per direction.

    ``mode="ito"`` uses the Ito-reduced operators
    M0 = I - sum_i gamma p_i U_i^dagger U_i dt / 2 and the averaged click posterior.
    ``mode="sampled"`` draws dX_i and applies the exact interaction unitary
    exp(-i sum_i sqrt(gamma p_i) h_i dX_i), whose click posterior is a coherent
    (pure) combination of the U_i; it agrees with the Ito form only on average.
    """

    def __init__(self, steering: SteeringSet, gamma: float, mode: str = "ito"):
        if mode not in ("ito", "sampled"):
            raise ValueError("mode must be 'ito' or 'sampled'")
        self.mode = mode
        self.ops = steering.jump_ops()
        self.weights = np.sqrt(gamma * steering.probs)
        self.K = sum(w * w * dag(U) @ U for w, U in zip(self.weights, self.ops))
        self.T_click = sum(w * w * kraus_transfer(U) for w, U in zip(self.weights, self.ops))
        self.n_uniform = 1
        self.n_normal = len(self.ops) if mode == "sampled" else 0
        self._cache = {}

    def _ito(self, r, u, dt, diag):
        if dt not in self._cache:
            self._cache[dt] = kraus_transfer(I2 - 0.5 * dt * self.K)
        T0 = self._cache[dt]
        q0 = T0[:, 0] + r @ T0[:, 1:].T
        q1 = self.T_click[:, 0] + r @ self.T_click[:, 1:].T
        rate_dt = np.maximum(dt * q1[:, 0], 0.0)
        click = bernoulli(u, rate_dt, diag) & (rate_dt >= MIN_CLICK_PROB)
        safe = np.where(click, q1[:, 0], 1.0)[:, None]
        return click, np.where(click[:, None], q1[:, 1:] / safe, normalized(q0))

    def _sampled(self, r, u, g, dt):
        dX = np.sqrt(dt) * g
        V = np.einsum("mi,i,ijk->mjk", dX, self.weights, np.array(self.ops))
        P = dag(V) @ V
        lam, vec = np.linalg.eigh(P)
        s = np.sqrt(np.maximum(lam, 0.0))
        cosv = np.cos(s)
        sinc = np.where(s > 1e-300, np.sin(s) / np.where(s > 1e-300, s, 1.0), 1.0)
        M0 = vec @ (cosv[:, :, None] * dag(vec))
        M1 = -1j * V @ (vec @ (sinc[:, :, None] * dag(vec)))
        rho = density_from_bloch(r)
        b0 = M0 @ rho @ dag(M0)
        b1 = M1 @ rho @ dag(M1)
        p1 = np.trace(b1, axis1=1, axis2=2).real
        p0 = np.trace(b0, axis1=1, axis2=2).real
        click = (u < p1) & (p1 >= MIN_CLICK_PROB)
        post = np.where(click[:, None, None], b1 / np.where(click, p1, 1.0)[:, None, None],
                        b0 / p0[:, None, None])
        return click, bloch_from_density(post)

    def step_outcome(self, r, u, g, dt, diag):
        if self.mode == "ito":
            return self._ito(r, u[:, 0], dt, diag)
        return self._sampled(r, u[:, 0], g, dt)

    def step(self, r, u, g, dt, diag):
        return self.step_outcome(r, u, g, dt, diag)[1]


def full_step(omega, steering: SteeringSet, gamma: float, dt: float, stream: RngStream):
    return FullStepper(steering, gamma).single(omega, dt, stream)


def dir_avg_step(pi_s, steering: SteeringSet, gamma: float, dt: float, stream: RngStream):
    return DirAvgStepper(steering, gamma).single(pi_s, dt, stream)


def click_avg_step(sigma_s, steering: SteeringSet, gamma: float, dt: float, stream: RngStream):
    return ClickAvgStepper(steering, gamma).single(sigma_s, dt, stream)


def multi_noise_step(rho, steering: SteeringSet, gamma: float, dt: float, stream: RngStream, mode: str = "ito"):
    """One step of the multi-noise interaction model; returns (outcome, posterior)."""
    st = MultiNoiseStepper(steering, gamma, mode)
    u = stream.uniform((1, st.n_uniform))
    g = stream.normal((1, st.n_normal))
    click, r = st.step_outcome(bloch_from_density(rho)[None], u, g, dt, stream.diagnostics)
    r = r[0]
    n = np.linalg.norm(r)
    return int(click[0]), density_from_bloch(r / n if n > 1 else r)


# Averaged dynamics ---------------------------------------------------------

def avg_lindblad_rhs(rho, steering: SteeringSet, gamma: float):
    return sum(gamma * p * dissipator(U, rho) for (_, _, p), U in zip(steering.entries, steering.jump_ops()))


def avg_generator(steering: SteeringSet, gamma: float) -> np.ndarray:
    return generator_transfer(lambda s: avg_lindblad_rhs(s, steering, gamma))


def avg_lindblad_solution(r0, steering: SteeringSet, gamma: float, t) -> np.ndarray:
    return lindblad_flow(avg_generator(steering, gamma), r0, t)


def two_dir_solution(gamma: float, t):
    """([rho]_11, [rho]_12) for the symmetric pi/3 pair started at (1, 0, -1)/sqrt(2)."""
    t = np.asarray(t, dtype=float)
    rho11 = 0.9 - (8 + 5 * np.sqrt(2)) / 20 * np.exp(-5 * gamma * t / 8)
    rho12 = np.exp(-7 * gamma * t / 8) / (2 * np.sqrt(2))
    return rho11, rho12


def det_fixed_point(steering: SteeringSet) -> np.ndarray:
    """Fixed point of the direction-averaged no-click drift.

    U_i^dagger U_i = (I - n_i.sigma)/2, so -Tr[sum_i p_i U_i^dagger U_i sigma] is the
    mean steering direction sum_i p_i n_i, and the fixed point is that vector normalised.
    """
    ops = steering.jump_ops()
    K = sum(p * dag(U) @ U for (_, _, p), U in zip(steering.entries, ops))
    v = -np.array([np.trace(K @ s).real for s in (SX, SY, SZ)])
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise IsotropicSetError("mean steering direction vanishes; no unique fixed point")
    return v / norm


# Two-direction stationary state --------------------------------------------

def two_dir_stationary_entries(p: float, theta: float):
    """Closed-form stationary [rho]_11 and [rho]_12 for {(theta, 0; p), (theta, pi; 1 - p)}."""
    q = (1 - p) * p
    c4 = np.cos(4 * theta)
    rho11 = ((4 + q + 4 * (1 + q) * np.cos(theta) - q * (4 * np.cos(3 * theta) + c4))
             / (8 + 2 * q - 2 * q * c4))
    rho12 = 2 * (2 * p - 1) * np.sin(theta) / (4 + q - q * c4)
    return rho11, rho12


def two_dir_series(p: float, theta: float) -> QuantifierTriple:
    """Small-theta expansions of the stationary quantifiers.

    Away from p = 1/2 the trace distance has odd powers of |theta| with leading
    coefficient |1 - 2p| / 2; at p = 1/2 all three start at theta^4.
    """
    th = abs(theta)
    if abs(p - 0.5) < 1e-12:
        return QuantifierTriple(1 - th ** 4 / 16, th ** 4 / 16 + th ** 6 / 48, th ** 4 / 8)
    q = (p - 1) * p
    c = abs(1 - 2 * p) / 2
    D = c * (th + (60 * q - 1) / 24 * th ** 3 + (120 * q * (78 * q - 49) + 1) / 1920 * th ** 5)
    D += (16 * q * (630 * q * (8 * q * (157 * q - 163) - 229) + 27011) - 1) / (1290240 * c) * th ** 7
    F = 1 - 0.25 * (1 - 4 * p + 4 * p * p) * th ** 2 + (1 + 8 * p - 104 * p ** 2 + 192 * p ** 3 - 96 * p ** 4) / 48 * th ** 4
    L = 2 * p * (1 - 4 * p + 6 * p * p - 3 * p ** 3) * th ** 4
    return QuantifierTriple(F, D, L)


def two_dir_stationary(p: float, theta: float):
    """Stationary state of the two-direction Lindbladian with exact and series quantifiers."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if not -np.pi <= theta <= np.pi:
        raise ValueError("theta must lie in [-pi, pi]")
    rho11, rho12 = two_dir_stationary_entries(p, theta)
    rho = np.array([[rho11, rho12], [rho12, 1 - rho11]], dtype=complex)
    r = np.array([2 * rho12, 0.0, 2 * rho11 - 1])
    exact = QuantifierTriple(*(float(v) for v in bloch_metrics(r)))
    return rho, exact, two_dir_series(p, theta)


def two_dir_quantifiers(p, theta):
    """Vectorised exact (F, D, L) of the two-direction stationary state."""
    rho11, rho12 = two_dir_stationary_entries(np.asarray(p, float), np.asarray(theta, float))
    F = rho11
    D = np.sqrt((1 - rho11) ** 2 + rho12 ** 2)
    L = 1 - rho11 ** 2 - (1 - rho11) ** 2 - 2 * rho12 ** 2
    return F, D, L


# Continuous direction distributions ------------------------------------------

@dataclass(frozen=True)
class UniformArc:
    theta_tilde: float

    def __post_init__(self):
        if not 0 < self.theta_tilde <= np.pi:
            raise ValueError("theta_tilde must lie in (0, pi]")


@dataclass(frozen=True)
class VonMises:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def _bessel_ratio_cf(x: float, tol: float = 1e-16, max_terms: int = 100000) -> float:
    """I1(x)/I0(x) from the continued fraction I_n/I_{n-1} = 1/(2n/x + I_{n+1}/I_n) (modified Lentz)."""
    tiny = 1e-300
    f = tiny
    C, D = f, 0.0
    for n in range(1, max_terms):
        b = 2 * n / x
        a = 1.0
        D = b + a * D
        D = 1 / (D if D != 0 else tiny)
        C = b + a / C
        C = C if C != 0 else tiny
        delta = C * D
        f *= delta
        if abs(delta - 1) < tol:
            return f
    raise RuntimeError("Bessel-ratio continued fraction did not converge")


def _bessel_ratio_asymptotic(x: float) -> float:
    # I1/I0 ~ 1 - 1/(2x) - 1/(8x^2) - 1/(8x^3) - 25/(128x^4) for large x.
    y = 1 / x
    return 1 - y / 2 - y ** 2 / 8 - y ** 3 / 8 - 25 * y ** 4 / 128


def bessel_ratio(x: float) -> float:
    """I1(x)/I0(x) for x > 0."""
    if x <= 50:
        return float(ive(1, x) / ive(0, x))
    if x <= 1e6:
        return _bessel_ratio_cf(x)
    return _bessel_ratio_asymptotic(x)


def continuous_fidelity(dist) -> float:
    """Stationary fidelity for a continuous distribution of tilt angles in a plane."""
    if isinstance(dist, UniformArc):
        th = dist.theta_tilde
        return 0.5 + 4 * np.sin(th) / (6 * th + np.sin(2 * th))
    if isinstance(dist, VonMises):
        s2 = dist.sigma ** 2
        x = 1 / s2 if s2 > 0 else np.inf
        if not np.isfinite(x):
            return 1.0
        ratio = bessel_ratio(x)
        return 0.5 + 1 / (2 / ratio - s2)
    raise TypeError("continuous distribution expected")


def _quadrature(dist, nodes: int = 64):
    if isinstance(dist, UniformArc):
        lo, hi = -dist.theta_tilde, dist.theta_tilde
        density = lambda th: np.full_like(th, 1 / (2 * dist.theta_tilde))
    elif isinstance(dist, VonMises):
        lo, hi = -np.pi, np.pi
        k = dist.sigma ** -2
        # exp(k (cos - 1)) / (2 pi ive(0, k)) avoids overflow for large k.
        density = lambda th: np.exp(k * (np.cos(th) - 1)) / (2 * np.pi * ive(0, k))
    else:
        raise TypeError("continuous distribution expected")
    x, w = roots_legendre(nodes)
    th = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    return th, 0.5 * (hi - lo) * w * density(th)


def continuous_generator(dist, gamma: float, nodes: int = 64) -> np.ndarray:
    """Transfer matrix of gamma * integral p(theta) D(U(theta)) d theta by Gauss-Legendre quadrature."""
    th, w = _quadrature(dist, nodes)
    G = np.zeros((4, 4))
    for t_k, w_k in zip(th, w):
        U = rotated_jump(t_k, 0.0)
        G += w_k * generator_transfer(lambda s, U=U: dissipator(U, s))
    return gamma * G / np.sum(w)


def continuous_solution(r0, dist, gamma: float, t, nodes: int = 64) -> np.ndarray:
    return lindblad_flow(continuous_generator(dist, gamma, nodes), r0, t)


def continuous_stationary(dist, nodes: int = 64) -> np.ndarray:
    return lindblad_stationary(continuous_generator(dist, 1.0, nodes))
