"""Fluctuating coupling strengths and environment-induced Hamiltonian noise.

Coupling errors only rescale the channel strength of the averaged dynamics.
Hamiltonian noise adds a white-noise perturbation sqrt(gamma~) xi(t) h~ to the
detector-system Hamiltonian; written in detector blocks

    h~ = [[A, B^dagger], [B, C]]      (detector x system ordering)

it contributes gamma~ D(A) + gamma~ D(B) to the averaged Lindbladian, while C
drops out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .protocol_ideal import MIN_CLICK_PROB, CouplingClass, JumpChannel, classify_coupling, ideal_lindblad
from .qmat import (
    SP, SZ, axis_rotate, bloch_from_density, commutator, dag, density_from_bloch, dissipator,
    generator_transfer, lindblad_flow, normalized, pauli_decomposition,
)
from .quantifiers import QuantifierTriple
from .stoch import RngStream, Stepper, bernoulli, categorical


# Coupling-strength distributions --------------------------------------------

@dataclass(frozen=True)
class DiscreteSet:
    """Quenched couplings J_n drawn with probability p_n at every step of length dt."""

    J: tuple
    p: tuple
    dt: float

    def __post_init__(self):
        J = tuple(float(v) for v in self.J)
        p = tuple(float(v) for v in self.p)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "p", p)
        if len(J) != len(p) or not J:
            raise ValueError("J and p must be non-empty and of equal length")
        if any(v < 0 for v in p) or abs(sum(p) - 1) > 1e-9:
            raise ValueError("p must be a probability vector")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not any(j != 0 and q > 0 for j, q in zip(J, p)):
            raise ValueError("at least one non-zero coupling must have positive probability")
        for j in J:
            if j != 0 and classify_coupling(abs(j), self.dt) is not CouplingClass.Valid:
                raise ValueError(f"coupling J={j} gives an invalid J dt")


@dataclass(frozen=True)
class Gaussian:
    """Zero-mean Gaussian couplings with variance sigma^2, redrawn every step of length dt."""

    sigma: float
    dt: float

    def __post_init__(self):
        if not (self.sigma > 0 and self.dt > 0):
            raise ValueError("sigma and dt must be positive")


@dataclass(frozen=True)
class WhiteNoise:
    upsilon: float

    def __post_init__(self):
        if not self.upsilon > 0:
            raise ValueError("upsilon must be positive")


def effective_rate(dist) -> float:
    if isinstance(dist, DiscreteSet):
        return float(sum(q * j * j * dist.dt for j, q in zip(dist.J, dist.p)))
    if isinstance(dist, Gaussian):
        return dist.dt * dist.sigma ** 2
    if isinstance(dist, WhiteNoise):
        return dist.upsilon ** 2
    raise TypeError("unknown coupling distribution")


def coupling_error_rhs(rho, dist, U=SP):
    return effective_rate(dist) * dissipator(U, rho)


def coupling_solution(r0, dist, t):
    """Averaged Bloch trajectory: the ideal solution with gamma replaced by the effective rate."""
    return ideal_lindblad(r0, effective_rate(dist), t)


def _coupling_kraus_update(r, phase, u, diag):
    """Sampled Kraus step with M0 = diag(1, cos phase), M1 = -i sin(phase) s+."""
    c = np.cos(phase)
    zeta = (1 + r[:, 2]) / 2
    p1 = (1 - c * c) * (1 - zeta)
    click = bernoulli(u, p1, diag) & (p1 >= MIN_CLICK_PROB)
    p0 = zeta + c * c * (1 - zeta)
    out = np.empty_like(r)
    out[:, 0] = c * r[:, 0] / p0
    out[:, 1] = c * r[:, 1] / p0
    out[:, 2] = 2 * zeta / p0 - 1
    out[click] = (0.0, 0.0, 1.0)
    return out


class WhiteNoiseCouplingStepper(Stepper):
    """Readout-resolved step with W(dt) = exp(-i Upsilon h0 dX).

    The Kraus pair is M0 = diag(1, cos(Upsilon dX)) and M1 = -i sin(Upsilon dX) s+.
    """

    n_uniform = 1
    n_normal = 1

    def __init__(self, upsilon: float):
        self.upsilon = upsilon

    def step(self, r, u, g, dt, diag):
        return _coupling_kraus_update(r, self.upsilon * np.sqrt(dt) * g[:, 0], u[:, 0], diag)


class QuenchedCouplingStepper(Stepper):
    """Discrete steps of length dist.dt with a coupling redrawn from ``dist`` each step."""

    n_uniform = 2
    n_normal = 1

    def __init__(self, dist):
        if not isinstance(dist, (DiscreteSet, Gaussian)):
            raise TypeError("quenched steps need a DiscreteSet or Gaussian distribution")
        self.dist = dist

    def step(self, r, u, g, dt, diag):
        if not np.isclose(dt, self.dist.dt, rtol=1e-12, atol=0):
            raise ValueError("grid dt must equal the distribution's step length")
        if isinstance(self.dist, DiscreteSet):
            J = np.asarray(self.dist.J)[categorical(u[:, 1], self.dist.p)]
        else:
            J = self.dist.sigma * g[:, 0]
        return _coupling_kraus_update(r, J * dt, u[:, 0], diag)


def whitenoise_coupling_step(rho, upsilon: float, dt: float, stream: RngStream | None = None, blind: bool = False):
    """Blind: rho + Upsilon^2 D(s+) rho dt. Otherwise a sampled Kraus update."""
    if blind:
        return rho + upsilon ** 2 * dissipator(SP, rho) * dt
    return WhiteNoiseCouplingStepper(upsilon).single(rho, dt, stream)


# Hamiltonian noise -----------------------------------------------------------

@dataclass(frozen=True)
class PerturbationBlocks:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=complex))
        if np.max(np.abs(self.A - dag(self.A))) > 1e-12 or np.max(np.abs(self.C - dag(self.C))) > 1e-12:
            raise ValueError("A and C must be Hermitian")

    @classmethod
    def from_hds(cls, h) -> "PerturbationBlocks":
        h = np.asarray(h, dtype=complex)
        if h.shape != (4, 4) or np.max(np.abs(h - dag(h))) > 1e-12:
            raise ValueError("h~ must be a Hermitian 4x4 matrix")
        return cls(h[:2, :2], h[2:, :2], h[2:, 2:])

    @classmethod
    def system_only(cls, G) -> "PerturbationBlocks":
        """Blocks of I_d x G: the noise acts on the system alone."""
        G = np.asarray(G, dtype=complex)
        return cls(G, np.zeros((2, 2), dtype=complex), G)

    def hds(self) -> np.ndarray:
        return np.block([[self.A, dag(self.B)], [self.B, self.C]])


@dataclass(frozen=True)
class NoiseParams:
    """Noise coupling Upsilon and correlation integral eta; only gamma~ = eta Upsilon^2 matters."""

    upsilon: float
    eta: float

    @property
    def gamma_tilde(self) -> float:
        return self.eta * self.upsilon ** 2


def perturbed_lindblad_rhs(rho, gamma: float, blocks: PerturbationBlocks, gamma_tilde: float, U=SP):
    return (gamma * dissipator(U, rho) + gamma_tilde * dissipator(blocks.A, rho)
            + gamma_tilde * dissipator(blocks.B, rho))


def perturbed_generator(gamma, blocks, gamma_tilde, U=SP):
    return generator_transfer(lambda s: perturbed_lindblad_rhs(s, gamma, blocks, gamma_tilde, U))


def perturbed_solution(r0, gamma, blocks, gamma_tilde, t, U=SP):
    return lindblad_flow(perturbed_generator(gamma, blocks, gamma_tilde, U), r0, t)


def sigma_z_noise_solution(r0, gamma: float, gamma_tilde: float, t):
    """A = sz, B = 0: coherences decay at (gamma + 4 gamma~)/2, the population at gamma."""
    x0, y0, z0 = np.asarray(r0, dtype=float)
    t = np.asarray(t, dtype=float)
    h = np.exp(-(gamma + 4 * gamma_tilde) * t / 2)
    return np.stack([x0 * h, y0 * h, 1 - (1 - z0) * np.exp(-gamma * t)], axis=-1)


def sigma_x_noise_stationary(gamma: float, gamma_tilde: float) -> float:
    """Stationary [rho]_11 for A = sx, B = 0."""
    return (gamma + gamma_tilde) / (gamma + 2 * gamma_tilde)


def stationary_quantifiers_sigma_x(gamma: float, gamma_tilde: float):
    """(exact, leading order in gamma~/gamma) stationary quantifiers for A = sx, B = 0."""
    if not gamma > 0 or gamma_tilde < 0:
        raise ValueError("need gamma > 0 and gamma~ >= 0")
    den = gamma + 2 * gamma_tilde
    exact = QuantifierTriple((gamma + gamma_tilde) / den, gamma_tilde / den,
                             2 * gamma_tilde * (gamma + gamma_tilde) / den ** 2)
    e = gamma_tilde / gamma
    leading = QuantifierTriple(1 - e, e, 2 * e)
    return exact, leading


class JumpDiffusiveStepper(Stepper):
    """Jump SME with an extra white-noise unitary channel.

    Click (probability <gamma U^dag U + gamma~ B^dag B> dt): jump to
    (gamma U w U^dag + gamma~ B w B^dag) / <...>. Otherwise the no-click
    backaction of the same operator is applied, followed by the diffusion
    exp(-i sqrt(gamma~) A dX) as an exact rotation of the Bloch vector. With
    ``first_order=True`` the diffusion is the truncated Ito form
    w - i sqrt(gamma~)[A, w] dX + gamma~ D(A) w dt instead.
    """

    n_uniform = 1
    n_normal = 1

    def __init__(self, gamma: float, blocks: PerturbationBlocks, gamma_tilde: float, U=SP, first_order: bool = False):
        self.channel = JumpChannel([(gamma, U), (gamma_tilde, blocks.B)])
        self.gamma_tilde = gamma_tilde
        a = pauli_decomposition(blocks.A)[1:]
        self.a_norm = float(np.linalg.norm(a))
        self.axis = a / self.a_norm if self.a_norm > 0 else a
        self.first_order = first_order
        if first_order:
            A = blocks.A
            self.G_H = generator_transfer(lambda s: -1j * np.sqrt(gamma_tilde) * commutator(A, s))
            self.G_D = generator_transfer(lambda s: gamma_tilde * dissipator(A, s))

    def step(self, r, u, g, dt, diag):
        r_new, clicked = self.channel.sample(r, u[:, 0], dt, diag)
        if self.a_norm == 0 or self.gamma_tilde == 0:
            return r_new
        dX = np.sqrt(dt) * g[:, 0]
        if self.first_order:
            q = np.concatenate([np.ones((len(r_new), 1)), r_new], axis=1)
            q = q + dX[:, None] * (q @ self.G_H.T) + dt * (q @ self.G_D.T)
            diffused = normalized(q)
        else:
            angle = 2 * np.sqrt(self.gamma_tilde) * self.a_norm * dX
            diffused = axis_rotate(r_new, self.axis, angle)
        return np.where(clicked[:, None], r_new, diffused)


def jump_diffusive_step(omega, gamma, blocks, gamma_tilde, dt, stream: RngStream, first_order: bool = False):
    return JumpDiffusiveStepper(gamma, blocks, gamma_tilde, first_order=first_order).single(omega, dt, stream)


# Commutation checks ------------------------------------------------------------

def _h0(U=SP):
    h = np.kron(np.array([[0, 0], [1, 0]]), U)
    return h + dag(h)


def _ad(h):
    """ad_h on row-major vectorised 4x4 matrices."""
    n = h.shape[0]
    return np.kron(h, np.eye(n)) - np.kron(np.eye(n), h.T)


def _partial_trace_d(big):
    return np.einsum("...aiaj->...ij", big.reshape(big.shape[:-2] + (2, 2, 2, 2)))


def _unitaries(H):
    """exp(-i H) for a batch of Hermitian matrices."""
    lam, vec = np.linalg.eigh(H)
    return vec @ (np.exp(-1j * lam)[..., None] * dag(vec))


def time_ordered_identity_error(J: float, blocks: PerturbationBlocks, gamma_tilde: float, t: float,
                                substeps: int = 1000, U=SP) -> float:
    """Relative difference between the interaction-picture product and the direct exponential.

    Checks exp(t(A + B)) = exp(tA) T exp(int_0^t e^{-sA} B e^{sA} ds) with
    A = -i J ad(h0), B = -(gamma~/2) ad(h~)^2, using a fourth-order Magnus step per substep.
    """
    h0 = _h0(U)
    ht = blocks.hds()
    A = -1j * J * _ad(h0)
    B = -0.5 * gamma_tilde * _ad(ht) @ _ad(ht)
    lam, vec = np.linalg.eigh(h0)

    def conj(s):
        # e^{-sA} B e^{sA} with e^{-sA} rho = V rho V^dagger, V = exp(i s J h0).
        V = vec @ np.diag(np.exp(1j * s * J * lam)) @ dag(vec)
        S = np.kron(V, dag(V).T)
        Sinv = np.kron(dag(V), V.T)
        return S @ B @ Sinv

    h = t / substeps
    c = np.sqrt(3) / 6
    P = np.eye(16, dtype=complex)
    for k in range(substeps):
        s0 = k * h
        A1 = conj(s0 + (0.5 - c) * h)
        A2 = conj(s0 + (0.5 + c) * h)
        omega = 0.5 * h * (A1 + A2) + (np.sqrt(3) / 12) * h * h * (A2 @ A1 - A1 @ A2)
        P = expm(omega) @ P
    lhs = expm(t * A) @ P
    rhs = expm(t * (A + B))
    return float(np.linalg.norm(lhs - rhs, 2) / max(1.0, np.linalg.norm(rhs, 2)))


@dataclass
class CommutationReport:
    e_of_trace: np.ndarray
    trace_of_e: np.ndarray
    closed: np.ndarray
    se: np.ndarray
    identity_error: float
    n: int

    def deviations(self):
        return {
            "E.Tr_d vs Tr_d.E": np.abs(self.e_of_trace - self.trace_of_e),
            "E.Tr_d vs exp(Lt)": np.abs(self.e_of_trace - self.closed),
            "Tr_d.E vs exp(Lt)": np.abs(self.trace_of_e - self.closed),
        }

    def passed(self, floor: float = 1e-12, identity_tol: float = 1e-10) -> bool:
        ok = all(np.all(d <= 3 * self.se + floor) for d in self.deviations().values())
        return bool(ok and self.identity_error <= identity_tol)


def commutation_checks(gamma: float, blocks: PerturbationBlocks, gamma_tilde: float, t: float, n: int,
                       seed: int = 0, r0=(1 / np.sqrt(2), 0.0, -1 / np.sqrt(2)), substeps: int = 100,
                       identity_substeps: int = 1000, U=SP) -> CommutationReport:
    """Monte-Carlo comparison of noise averaging and partial trace over one step of length t.

    The detector starts in |0>, the coupling is J = sqrt(gamma / t). Each sample
    evolves rho_ds under exp(-i (J h0 ds + sqrt(gamma~) h~ dX)) in Strang-split
    substeps; the Bloch vector of the system is reported for E[Tr_d(.)],
    Tr_d(E[.]) and for the closed flow exp(L t) of the averaged detector-system
    generator -i J ad(h0) - (gamma~/2) ad(h~)^2.
    """
    J = np.sqrt(gamma / t)
    h0 = _h0(U)
    ht = blocks.hds()
    rho_s = density_from_bloch(np.asarray(r0, dtype=float))
    rho_ds = np.kron(np.diag([1.0, 0.0]).astype(complex), rho_s)
    ds = t / substeps
    half = _unitaries(0.5 * ds * J * h0)
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    lam, vec = np.linalg.eigh(ht)
    rho = np.broadcast_to(rho_ds, (n, 4, 4)).copy()
    for _ in range(substeps):
        dX = np.sqrt(ds) * gen.standard_normal(n)
        W = vec @ (np.exp(-1j * np.sqrt(gamma_tilde) * lam[None, :] * dX[:, None])[..., None] * dag(vec))
        W = half @ W @ half
        rho = W @ rho @ dag(W)
    samples = bloch_from_density(_partial_trace_d(rho))
    e_of_trace = samples.mean(axis=0)
    trace_of_e = bloch_from_density(_partial_trace_d(rho.mean(axis=0)))
    se = samples.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(3)
    L = -1j * J * _ad(h0) - 0.5 * gamma_tilde * _ad(ht) @ _ad(ht)
    closed_ds = (expm(t * L) @ rho_ds.reshape(-1)).reshape(4, 4)
    closed = bloch_from_density(_partial_trace_d(closed_ds))
    ident = time_ordered_identity_error(J, blocks, gamma_tilde, t, identity_substeps, U)
    return CommutationReport(e_of_trace, trace_of_e, closed, se, ident, n)


SIGMA_Z_BLOCKS = PerturbationBlocks.system_only(SZ)
