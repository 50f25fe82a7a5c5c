"""Reproducible random streams, batched trajectory stepping and ensemble statistics.

Every trajectory ``i`` of a run with master seed ``s`` draws from its own
Philox generator keyed by ``(s, i)``. Philox is counter based, so a stream
depends only on that key and not on which worker happens to run it. Trajectories
are stepped in fixed-size chunks that are vectorised over trajectories; chunk
results are merged in a fixed binary tree, so statistics are bit-identical for
any thread count.

Steppers operate on batches of Bloch vectors (shape ``(m, 3)``) and receive
the uniforms and standard normals they declared for the current step.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .qmat import POSITIVITY_TOL, bloch_from_density, density_from_bloch
from .quantifiers import bloch_metrics

COARSE_RATE = 0.1
CHUNK = 1024
BLOCK = 256


def stream_key(seed: int, index: int) -> int:
    """128-bit Philox key: the stream index in the high word, the seed in the low word."""
    seed = int(seed) & ((1 << 64) - 1)
    if index < 0:
        raise ValueError("stream index must be non-negative")
    return (int(index) << 64) | seed


@dataclass
class Diagnostics:
    """Counts Bernoulli draws whose rate*dt exceeded ``COARSE_RATE`` (dt too coarse)."""

    coarse_jumps: int = 0

    def note_rates(self, rate_dt) -> None:
        self.coarse_jumps += int(np.count_nonzero(np.asarray(rate_dt) > COARSE_RATE))


class RngStream:
    """Random stream identified by ``(master_seed, stream_index)``."""

    def __init__(self, master_seed: int, stream_index: int = 0):
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self._gen = np.random.Generator(np.random.Philox(key=stream_key(master_seed, stream_index)))
        self.diagnostics = Diagnostics()

    def uniform(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)


def sample_wiener(stream: RngStream, dt: float) -> float:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return float(np.sqrt(dt) * stream.normal())


def bernoulli(u, rate_dt, diagnostics: Diagnostics | None = None):
    """Vectorised Bernoulli(min(rate_dt, 1)) from uniforms ``u``."""
    rate_dt = np.asarray(rate_dt, dtype=float)
    if np.any(rate_dt < 0):
        raise ValueError("rate_dt must be non-negative")
    if diagnostics is not None:
        diagnostics.note_rates(rate_dt)
    return np.asarray(u) < rate_dt


def sample_jump(stream: RngStream, rate_dt: float) -> int:
    return int(bernoulli(stream.uniform(), rate_dt, stream.diagnostics))


def check_probs(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("probabilities must be a non-empty list")
    if np.any(probs < 0):
        raise ValueError("probabilities must be non-negative")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
    return probs


def categorical(u, probs) -> np.ndarray:
    """Vectorised categorical draw; zero-probability categories are never chosen."""
    probs = np.asarray(probs, dtype=float)
    cum = np.cumsum(probs)
    idx = np.searchsorted(cum, np.asarray(u) * cum[-1], side="right")
    last = np.flatnonzero(probs > 0)[-1]
    return np.minimum(idx, last)


def sample_categorical(stream: RngStream, probs) -> int:
    return int(categorical(stream.uniform(), check_probs(probs)))


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")

    @property
    def t_max(self) -> float:
        return self.dt * self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


class StepError(RuntimeError):
    """Raised by a stepper; ``rows`` are the offending batch rows."""

    def __init__(self, message: str, rows):
        super().__init__(message)
        self.rows = np.atleast_1d(rows)


class TrajectoryError(RuntimeError):
    def __init__(self, message: str, trajectory: int, time: float):
        super().__init__(f"trajectory {trajectory} at t={time:.6g}: {message}")
        self.trajectory = trajectory
        self.time = time


class Stepper:
    """Base class: one time step for a batch of Bloch vectors."""

    n_uniform = 0
    n_normal = 0

    def step(self, r: np.ndarray, u: np.ndarray, g: np.ndarray, dt: float, diag: Diagnostics) -> np.ndarray:
        raise NotImplementedError

    def single(self, rho: np.ndarray, dt: float, stream: RngStream) -> np.ndarray:
        """Advance a single density matrix with draws from ``stream``."""
        u = stream.uniform((1, self.n_uniform))
        g = stream.normal((1, self.n_normal))
        r = bloch_from_density(rho)[None, :]
        out = self.step(r, u, g, dt, stream.diagnostics)
        return density_from_bloch(_clip_norm(out[0]))


def _clip_norm(r):
    # Tolerated overshoot (< POSITIVITY_TOL) must not trip the constructor.
    n = np.linalg.norm(r)
    return r / n if n > 1 else r


@dataclass
class EnsembleStats:
    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n_trajectories: int
    impurity_mean: np.ndarray
    impurity_max: np.ndarray
    coarse_jumps: int = 0
    paths: np.ndarray | None = field(default=None, repr=False)

    def mean_densities(self) -> np.ndarray:
        return density_from_bloch(_shrink(self.mean))

    def metrics(self, target=None):
        """(F, D, L) of the mean state at every grid point."""
        return bloch_metrics(self.mean, target)

    @property
    def pop11(self) -> np.ndarray:
        return (1 + self.mean[:, 2]) / 2

    @property
    def coherence(self) -> np.ndarray:
        return (self.mean[:, 0] - 1j * self.mean[:, 1]) / 2


def _shrink(r):
    n = np.linalg.norm(r, axis=-1, keepdims=True)
    return np.where(n > 1, r / np.maximum(n, 1), r)


@dataclass
class _Partial:
    count: int
    mean: np.ndarray
    m2: np.ndarray
    imp_sum: np.ndarray
    imp_max: np.ndarray
    coarse: int
    paths: np.ndarray | None


def _merge(a: _Partial, b: _Partial) -> _Partial:
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    paths = None if a.paths is None else np.concatenate([a.paths, b.paths], axis=1)
    return _Partial(n, mean, m2, a.imp_sum + b.imp_sum, np.maximum(a.imp_max, b.imp_max),
                    a.coarse + b.coarse, paths)


def _tree_reduce(parts):
    while len(parts) > 1:
        nxt = [_merge(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _run_chunk(stepper: Stepper, r0, grid: TimeGrid, seed: int, start: int, stop: int, keep_paths: bool):
    m = stop - start
    K = grid.n_steps + 1
    gens = [np.random.Generator(np.random.Philox(key=stream_key(seed, i))) for i in range(start, stop)]
    diag = Diagnostics()
    r = np.tile(np.asarray(r0, dtype=float), (m, 1))
    mean = np.empty((K, 3))
    m2 = np.empty((K, 3))
    imp_sum = np.empty(K)
    imp_max = np.empty(K)
    paths = np.empty((K, m, 3)) if keep_paths else None

    def record(k):
        # Shift by the first row so identical trajectories give exactly zero variance.
        d = r - r[0]
        s = d.sum(axis=0)
        mean[k] = r[0] + s / m
        m2[k] = np.maximum((d * d).sum(axis=0) - s * s / m, 0.0)
        imp = 0.5 * (1 - np.sum(r * r, axis=1))
        imp_sum[k] = imp.sum()
        imp_max[k] = imp.max()
        if keep_paths:
            paths[k] = r

    record(0)
    nu, ng = stepper.n_uniform, stepper.n_normal
    k = 0
    while k < grid.n_steps:
        b = min(BLOCK, grid.n_steps - k)
        U = np.stack([gen.random((b, nu)) for gen in gens], axis=1)
        G = np.stack([gen.standard_normal((b, ng)) for gen in gens], axis=1)
        for j in range(b):
            t = (k + j + 1) * grid.dt
            try:
                r = stepper.step(r, U[j], G[j], grid.dt, diag)
            except StepError as exc:
                raise TrajectoryError(str(exc), start + int(exc.rows[0]), t) from exc
            nrm2 = np.sum(r * r, axis=1)
            bad = ~(nrm2 <= (1 + POSITIVITY_TOL) ** 2)
            if bad.any():
                row = int(np.flatnonzero(bad)[0])
                raise TrajectoryError("positivity breach (Bloch norm > 1)", start + row, t)
            record(k + j + 1)
        k += b
    return _Partial(m, mean, m2, imp_sum, imp_max, diag.coarse_jumps, paths)


def run_ensemble(stepper: Stepper, initial, grid: TimeGrid, n: int, seed: int,
                 threads: int | None = None, keep_paths: bool = False,
                 chunk: int = CHUNK) -> EnsembleStats:
    """Run ``n`` trajectories of ``stepper`` from ``initial`` and collect statistics.

    ``initial`` is a Bloch vector or a 2x2 density matrix. Trajectory ``i`` uses
    stream ``(seed, i)``. Failures are re-raised as :class:`TrajectoryError`
    carrying the trajectory index (the lowest failing chunk wins).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    r0 = np.asarray(initial)
    if r0.shape == (2, 2):
        r0 = bloch_from_density(r0)
    r0 = np.asarray(r0, dtype=float)
    density_from_bloch(r0)  # validates
    bounds = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
    workers = threads or os.cpu_count() or 1

    def job(b):
        return _run_chunk(stepper, r0, grid, seed, b[0], b[1], keep_paths)

    if workers == 1 or len(bounds) == 1:
        parts = [job(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(job, b) for b in bounds]
            parts = []
            for fut in futures:
                parts.append(fut.result())
    total = _tree_reduce(parts)
    if n > 1:
        se = np.sqrt(total.m2 / (n - 1) / n)
    else:
        se = np.zeros_like(total.mean)
    return EnsembleStats(grid.times, total.mean, se, n, total.imp_sum / n, total.imp_max,
                         total.coarse, total.paths)


def run_trajectory(stepper: Stepper, initial, grid: TimeGrid, seed: int, index: int = 0) -> np.ndarray:
    """Bloch path of trajectory ``index``, identical to its role inside an ensemble."""
    r0 = np.asarray(initial)
    if r0.shape == (2, 2):
        r0 = bloch_from_density(r0)
    part = _run_chunk(stepper, np.asarray(r0, dtype=float), grid, seed, index, index + 1, True)
    return part.paths[:, 0, :]


# Deterministic integration ------------------------------------------------

def integrate_rk4(rhs, y0, dt: float, n_steps: int) -> np.ndarray:
    """Classical fixed-step RK4; returns all n_steps + 1 states."""
    y = np.asarray(y0)
    out = np.empty((n_steps + 1,) + y.shape, dtype=y.dtype)
    out[0] = y
    for k in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    return out


class TransferStepper(Stepper):
    """Deterministic step r -> normalize(T (1, r)); T is an exact or Euler propagator."""

    def __init__(self, T: np.ndarray):
        self.T = np.asarray(T, dtype=float)

    def step(self, r, u, g, dt, diag):
        q = self.T[:, 0] + r @ self.T[:, 1:].T
        return q[:, 1:] / q[:, :1]
