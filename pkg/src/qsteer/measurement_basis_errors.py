"""Detectors read out in a randomly chosen basis.

At every step the detector is measured in basis ``i`` with probability p_i. A
basis is a 2x2 unitary whose columns are the outcome kets |psi_alpha>. The
system Kraus operators are

    M_{i,alpha} = sum_d <psi_alpha|d> <d| W |0>,    W = exp(-i J dt h0).

Blind dynamics never depend on the choice of basis. Recorded dynamics do:
with the canonical basis a detector click is a quantum jump, while |+->
outcomes are symmetric and produce diffusive backaction in the weak limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .protocol_ideal import JumpChannel, discrete_step
from .qmat import I2, SP, bloch_from_density, cross_transfer, dag, density_from_bloch, kraus_transfer, normalized
from .stoch import RngStream, Stepper, categorical, check_probs

CANONICAL = np.eye(2, dtype=complex)
PLUS_MINUS = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class MeasurementBasisFamily:
    """Detector bases chosen with probabilities ``probs``."""

    bases: tuple
    probs: tuple

    def __post_init__(self):
        bases = tuple(np.asarray(b, dtype=complex) for b in self.bases)
        probs = tuple(float(v) for v in check_probs(self.probs))
        if len(bases) != len(probs):
            raise ValueError("one probability per basis is required")
        for b in bases:
            if b.shape != (2, 2) or np.max(np.abs(dag(b) @ b - I2)) > 1e-10:
                raise ValueError("each basis must be a 2x2 unitary (orthonormal columns)")
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "probs", probs)


def canonical_family() -> MeasurementBasisFamily:
    return MeasurementBasisFamily((CANONICAL,), (1.0,))


def plus_minus_family(p1: float) -> MeasurementBasisFamily:
    """Canonical basis with probability p1, |+-> otherwise."""
    if not 0 <= p1 <= 1:
        raise ValueError("p1 must lie in [0, 1]")
    return MeasurementBasisFamily((CANONICAL, PLUS_MINUS), (p1, 1 - p1))


def detector_kraus(J: float, dt: float, basis=CANONICAL, U=SP):
    """System Kraus operators, one per column of ``basis``, for a detector starting in |0>."""
    h0 = np.kron(np.array([[0, 0], [1, 0]]), U)
    h0 = h0 + dag(h0)
    W = expm(-1j * J * dt * h0)
    Md = [W[2 * d:2 * d + 2, 0:2] for d in range(2)]
    basis = np.asarray(basis, dtype=complex)
    return [sum(np.conj(basis[d, a]) * Md[d] for d in range(2)) for a in range(basis.shape[1])]


def random_basis_discrete_step(omega, family: MeasurementBasisFamily, J: float, dt: float,
                               stream: RngStream | None = None):
    """One step; returns (basis index, outcome, posterior).

    Without a stream the readout is averaged away and ``("blind", "blind", rho)`` comes back.
    """
    omega = np.asarray(omega, dtype=complex)
    if stream is None:
        out = np.zeros((2, 2), dtype=complex)
        for p, b in zip(family.probs, family.bases):
            for M in detector_kraus(J, dt, b):
                out += p * (M @ omega @ dag(M))
        return "blind", "blind", out
    i = int(categorical(stream.uniform(), family.probs))
    branches = [M @ omega @ dag(M) for M in detector_kraus(J, dt, family.bases[i])]
    weights = np.array([np.trace(b).real for b in branches])
    alpha = int(categorical(stream.uniform(), np.maximum(weights, 0)))
    return i, alpha, branches[alpha] / weights[alpha]


def blind_equivalence_check(family: MeasurementBasisFamily, J: float, dt: float, omega, n_steps: int) -> float:
    """Largest entrywise gap between blind random-basis and canonical-basis evolutions."""
    a = np.asarray(omega, dtype=complex)
    b = a.copy()
    worst = 0.0
    for _ in range(n_steps):
        a = random_basis_discrete_step(a, family, J, dt)[2]
        b = discrete_step(b, J, dt)[1]
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


class HybridStepper(Stepper):
    """Weak-measurement limit of a two-basis family.

    With probability p1 the step follows the jump unravelling of gamma D(U).
    Otherwise the state takes the diffusive Kraus update

        w -> M w M^dagger / Tr,   M = I - L^dagger L dt / 2 + L dZ,   L = i sqrt(gamma) U,

    with record dZ. ``record="gaussian"`` draws dZ = dW + <L + L^dagger> dt,
    ``record="binary"`` draws dZ = +-sqrt(dt) with the Born probabilities of the
    |+-> readout, which is the measurement that produces this limit.
    """

    n_uniform = 3
    n_normal = 1

    def __init__(self, p1: float, gamma: float, U=SP, record: str = "gaussian"):
        if not 0 <= p1 <= 1:
            raise ValueError("p1 must lie in [0, 1]")
        if record not in ("gaussian", "binary"):
            raise ValueError("record must be 'gaussian' or 'binary'")
        self.p1 = p1
        self.gamma = gamma
        self.record = record
        self.channel = JumpChannel([(gamma, U)])
        self.L = 1j * np.sqrt(gamma) * np.asarray(U, dtype=complex)
        self.T2 = kraus_transfer(self.L)
        self.c_row = cross_transfer(self.L, I2)[0]
        self._dt = None

    def _prepare(self, dt):
        if self._dt != dt:
            A = I2 - 0.5 * dt * dag(self.L) @ self.L
            self.T0 = kraus_transfer(A)
            self.T1 = cross_transfer(self.L, A)
            self._dt = dt

    def step_record(self, r, u, g, dt, diag):
        """Step plus per-row branch mask (True = jump branch) and record (click flag or dZ)."""
        self._prepare(dt)
        jump = u[:, 0] < self.p1
        out = np.empty_like(r)
        rec = np.zeros(len(r))
        if jump.any():
            rj, click = self.channel.sample(r[jump], u[jump, 1], dt, diag)
            out[jump] = rj
            rec[jump] = click
        dif = ~jump
        if dif.any():
            rd = r[dif]
            q = np.concatenate([np.ones((len(rd), 1)), rd], axis=1)
            q0, q1, q2 = q @ self.T0.T, q @ self.T1.T, q @ self.T2.T
            sdt = np.sqrt(dt)
            if self.record == "gaussian":
                dZ = sdt * g[dif, 0] + dt * (q @ self.c_row)
            else:
                w_plus = np.maximum(q0[:, 0] + sdt * q1[:, 0] + dt * q2[:, 0], 0.0)
                w_minus = np.maximum(q0[:, 0] - sdt * q1[:, 0] + dt * q2[:, 0], 0.0)
                dZ = np.where(u[dif, 2] * (w_plus + w_minus) < w_plus, sdt, -sdt)
            out[dif] = normalized(q0 + dZ[:, None] * q1 + (dZ * dZ)[:, None] * q2)
            rec[dif] = dZ
        return out, jump, rec

    def step(self, r, u, g, dt, diag):
        return self.step_record(r, u, g, dt, diag)[0]


def hybrid_sme_step(omega, p1: float, gamma: float, dt: float, stream: RngStream, record: str = "gaussian"):
    """Single hybrid step; returns (branch, record, posterior).

    ``branch`` is ``"jump"`` or ``"diffusive"``; the record is the click flag or dZ.
    """
    stepper = HybridStepper(p1, gamma, record=record)
    u = stream.uniform((1, 3))
    g = stream.normal((1, 1))
    r = bloch_from_density(omega)[None, :]
    out, jump, rec = stepper.step_record(r, u, g, dt, stream.diagnostics)
    rn = out[0]
    nrm = np.linalg.norm(rn)
    if nrm > 1:
        rn = rn / nrm
    branch = "jump" if jump[0] else "diffusive"
    value = bool(rec[0]) if jump[0] else float(rec[0])
    return branch, value, density_from_bloch(rn)
