"""``qsteer`` command line: run scenarios, check them against closed forms, sweep parameters.

A scenario is a JSON document::

    {
      "schema_version": 1,
      "error_model": {"type": "Ideal", "gamma": 0.1},
      "initial_bloch": [0.577, 0.577, -0.577],
      "time_grid": {"dt": 0.01, "n_steps": 6000},
      "run": {"mode": "ensemble", "n": 10000},
      "seed": 7,
      "target": [0.0, 0.0]
    }

``run.mode`` is ``ensemble``, ``single`` or ``lindblad``. The seed comes from
``--seed``, then ``QSTEER_SEED``, then the file, then 0. Exit status 2 means
a bad configuration, 3 a numerical failure and 4 a scenario without an oracle.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .coupling_hamiltonian_errors import (
    DiscreteSet, Gaussian, JumpDiffusiveStepper, PerturbationBlocks, QuenchedCouplingStepper,
    WhiteNoise, WhiteNoiseCouplingStepper, effective_rate, perturbed_generator, perturbed_solution,
    sigma_x_noise_stationary, sigma_z_noise_solution, stationary_quantifiers_sigma_x,
)
from .direction_errors import (
    ClickAvgStepper, DirAvgStepper, FullStepper, MultiNoiseStepper, SteeringSet, UniformArc, VonMises,
    avg_generator, avg_lindblad_rhs, avg_lindblad_solution, continuous_fidelity, continuous_generator,
    continuous_solution, continuous_stationary, two_dir_quantifiers, two_dir_stationary, two_direction_set,
)
from .measurement_basis_errors import HybridStepper, blind_equivalence_check, plus_minus_family
from .protocol_ideal import IdealJumpStepper, ideal_lindblad, ideal_rhs
from .qmat import (
    I2, SM, SP, SX, SY, SZ, UnphysicalStateError, bloch_from_density, density_from_bloch,
    generator_transfer, lindblad_flow, lindblad_stationary,
)
from .quantifiers import bloch_metrics
from .static_detector_error import (
    DetectorInitStepper, ErroneousChannelParams, RegimeError, analytic_solution, ellipsoid_residual, erroneous_rhs,
    stationary_bloch, stationary_quantifiers,
)
from .stoch import TimeGrid, TrajectoryError, integrate_rk4, run_ensemble, run_trajectory

SCHEMA_VERSION = 1
CSV_HEADER = ("t", "x", "y", "z", "re_coh", "im_coh", "pop11", "F", "D1", "L", "se_x", "se_y", "se_z")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NO_ORACLE = 0, 1, 2, 3, 4

MODEL_TYPES = ("Ideal", "DetectorInit", "Directions", "Coupling", "HamiltonianNoise", "MeasurementBasis")
HIERARCHIES = ("full", "dir_avg", "click_avg", "multi_noise", "lindblad")
OPERATORS = {"0": 0 * I2, "I": I2, "sx": SX, "sy": SY, "sz": SZ, "sp": SP, "sm": SM}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class NoOracle(Exception):
    pass


# Config parsing ---------------------------------------------------------------

def _get(d: dict, key: str, field: str, kind=float, default=None, required=True):
    if key not in d:
        if required and default is None:
            raise ConfigError(f"{field}.{key}" if field else key, "missing")
        return default
    v = d[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            raise ConfigError(f"{field}.{key}" if field else key, f"expected a finite number, got {v!r}")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{field}.{key}" if field else key, f"expected an integer, got {v!r}")
        return v
    if not isinstance(v, kind):
        raise ConfigError(f"{field}.{key}" if field else key, f"expected {kind.__name__}, got {v!r}")
    return v


def _operator(spec, field):
    if isinstance(spec, str):
        if spec not in OPERATORS:
            raise ConfigError(field, f"unknown operator {spec!r}; use one of {sorted(OPERATORS)}")
        return OPERATORS[spec]
    try:
        m = np.array([[complex(*e) if isinstance(e, list) else complex(e) for e in row] for row in spec])
    except (TypeError, ValueError):
        raise ConfigError(field, "operator must be a name or a 2x2 list of numbers / [re, im] pairs") from None
    if m.shape != (2, 2):
        raise ConfigError(field, "operator must be 2x2")
    return m


@dataclass
class Model:
    """A validated error model with its stepper, averaged flow and oracle hooks."""

    kind: str
    params: dict
    obj: object = None


def parse_model(em: dict, grid: TimeGrid) -> Model:
    if not isinstance(em, dict):
        raise ConfigError("error_model", "must be an object")
    kind = em.get("type")
    if kind not in MODEL_TYPES:
        raise ConfigError("error_model.type", f"must be one of {MODEL_TYPES}, got {kind!r}")
    f = "error_model"
    try:
        if kind == "Ideal":
            gamma = _get(em, "gamma", f)
            if gamma <= 0:
                raise ConfigError(f + ".gamma", "must be positive")
            return Model(kind, {"gamma": gamma})
        if kind == "DetectorInit":
            p = ErroneousChannelParams(_get(em, "gamma", f), _get(em, "kappa", f), _get(em, "a", f),
                                       _get(em, "phi", f, default=0.0, required=False))
            return Model(kind, {}, p)
        if kind == "Directions":
            gamma = _get(em, "gamma", f)
            if gamma <= 0:
                raise ConfigError(f + ".gamma", "must be positive")
            hierarchy = em.get("hierarchy", "lindblad")
            if hierarchy not in HIERARCHIES:
                raise ConfigError(f + ".hierarchy", f"must be one of {HIERARCHIES}")
            params = {"gamma": gamma, "hierarchy": hierarchy}
            if "distribution" in em:
                d = em["distribution"]
                dk = d.get("kind") if isinstance(d, dict) else None
                if dk == "uniform_arc":
                    obj = UniformArc(_get(d, "theta_tilde", f + ".distribution"))
                elif dk == "von_mises":
                    obj = VonMises(_get(d, "sigma", f + ".distribution"))
                else:
                    raise ConfigError(f + ".distribution.kind", "must be 'uniform_arc' or 'von_mises'")
                if hierarchy != "lindblad":
                    raise ConfigError(f + ".hierarchy", "continuous distributions support only 'lindblad'")
                return Model(kind, params, obj)
            if "set" in em:
                entries = em["set"]
                if not isinstance(entries, list) or not all(isinstance(e, list) and len(e) == 3 for e in entries):
                    raise ConfigError(f + ".set", "expected a list of [theta, phi, p] triples")
                return Model(kind, params, SteeringSet(entries))
            p, theta = _get(em, "p", f), _get(em, "theta", f)
            params.update(p=p, theta=theta)
            return Model(kind, params, two_direction_set(p, theta))
        if kind == "Coupling":
            d = em.get("distribution")
            dk = d.get("kind") if isinstance(d, dict) else None
            g = f + ".distribution"
            if dk == "discrete":
                J, p = d.get("J"), d.get("p")
                if not isinstance(J, list) or not isinstance(p, list):
                    raise ConfigError(g, "J and p must be lists")
                obj = DiscreteSet(J, p, grid.dt)
            elif dk == "gaussian":
                obj = Gaussian(_get(d, "sigma", g), grid.dt)
            elif dk == "white_noise":
                obj = WhiteNoise(_get(d, "upsilon", g))
            else:
                raise ConfigError(g + ".kind", "must be 'discrete', 'gaussian' or 'white_noise'")
            return Model(kind, {"gamma": effective_rate(obj)}, obj)
        if kind == "HamiltonianNoise":
            gamma, gt = _get(em, "gamma", f), _get(em, "gamma_tilde", f)
            if gamma <= 0 or gt < 0:
                raise ConfigError(f, "need gamma > 0 and gamma_tilde >= 0")
            A = _operator(em.get("A", "sz"), f + ".A")
            B = _operator(em.get("B", "0"), f + ".B")
            C = _operator(em.get("C", em.get("A", "sz")), f + ".C")
            blocks = PerturbationBlocks(A, B, C)
            first_order = em.get("first_order", False)
            if not isinstance(first_order, bool):
                raise ConfigError(f + ".first_order", "must be true or false")
            return Model(kind, {"gamma": gamma, "gamma_tilde": gt, "first_order": first_order,
                                "A": em.get("A", "sz"), "B": em.get("B", "0")}, blocks)
        if kind == "MeasurementBasis":
            gamma, p1 = _get(em, "gamma", f), _get(em, "p1", f)
            record = em.get("record", "gaussian")
            if gamma <= 0:
                raise ConfigError(f + ".gamma", "must be positive")
            if not 0 <= p1 <= 1:
                raise ConfigError(f + ".p1", "must lie in [0, 1]")
            if record not in ("gaussian", "binary"):
                raise ConfigError(f + ".record", "must be 'gaussian' or 'binary'")
            return Model(kind, {"gamma": gamma, "p1": p1, "record": record})
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f, str(exc)) from None
    raise AssertionError(kind)


@dataclass
class Scenario:
    raw: dict
    model: Model
    r0: np.ndarray
    grid: TimeGrid
    mode: str
    n: int
    seed: int
    target: tuple | None

    @property
    def digest(self) -> str:
        return scenario_digest(self.raw)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def scenario_digest(raw: dict) -> str:
    """sha256 of the canonical form; independent of key order in the file."""
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


def resolve_seed(cli_seed, raw: dict) -> int:
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get("QSTEER_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError("QSTEER_SEED", f"not an integer: {env!r}") from None
    if "seed" in raw:
        return _get(raw, "seed", "", kind=int)
    return 0


def parse_scenario(raw: dict, cli_seed=None) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    if "scenario" in raw and "scenario_digest" in raw:
        # A run record: replay the embedded scenario after checking its digest.
        if scenario_digest(raw["scenario"]) != raw["scenario_digest"]:
            raise ConfigError("scenario_digest", "does not match the embedded scenario")
        raw = raw["scenario"]
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"must be {SCHEMA_VERSION}")
    tg = raw.get("time_grid")
    if not isinstance(tg, dict):
        raise ConfigError("time_grid", "missing or not an object")
    dt = _get(tg, "dt", "time_grid")
    n_steps = _get(tg, "n_steps", "time_grid", kind=int)
    if dt <= 0:
        raise ConfigError("time_grid.dt", "must be positive")
    if n_steps < 0:
        raise ConfigError("time_grid.n_steps", "must be non-negative")
    grid = TimeGrid(dt, n_steps)
    r0 = raw.get("initial_bloch")
    if not (isinstance(r0, list) and len(r0) == 3 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in r0)):
        raise ConfigError("initial_bloch", "expected three numbers")
    r0 = np.array(r0, dtype=float)
    if np.linalg.norm(r0) > 1 + 1e-10:
        raise ConfigError("initial_bloch", "lies outside the Bloch ball")
    run = raw.get("run", {"mode": "lindblad"})
    if not isinstance(run, dict):
        raise ConfigError("run", "must be an object")
    mode = run.get("mode", "lindblad")
    if mode not in ("ensemble", "single", "lindblad"):
        raise ConfigError("run.mode", "must be 'ensemble', 'single' or 'lindblad'")
    n = _get(run, "n", "run", kind=int, default=1, required=False)
    if n < 1:
        raise ConfigError("run.n", "must be at least 1")
    target = raw.get("target")
    if target is not None:
        if not (isinstance(target, list) and len(target) == 2):
            raise ConfigError("target", "expected [theta, phi]")
        target = (float(target[0]), float(target[1]))
    model = parse_model(raw.get("error_model"), grid)
    if model.kind == "Directions" and isinstance(model.obj, (UniformArc, VonMises)) and mode != "lindblad":
        raise ConfigError("run.mode", "continuous direction distributions support only 'lindblad'")
    if model.kind == "Directions" and mode != "lindblad" and model.params["hierarchy"] == "lindblad":
        raise ConfigError("error_model.hierarchy", "choose full, dir_avg, click_avg or multi_noise for stochastic runs")
    seed = resolve_seed(cli_seed, raw)
    resolved = dict(raw)
    resolved["seed"] = seed
    return Scenario(resolved, model, r0, grid, mode, n, seed, target)


def load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None


# Simulation ----------------------------------------------------------------------

def make_stepper(model: Model):
    k, p = model.kind, model.params
    if k == "Ideal":
        return IdealJumpStepper(p["gamma"])
    if k == "DetectorInit":
        return DetectorInitStepper(model.obj)
    if k == "Directions":
        h = p["hierarchy"]
        cls = {"full": FullStepper, "dir_avg": DirAvgStepper, "click_avg": ClickAvgStepper,
               "multi_noise": MultiNoiseStepper}[h]
        return cls(model.obj, p["gamma"])
    if k == "Coupling":
        if isinstance(model.obj, WhiteNoise):
            return WhiteNoiseCouplingStepper(model.obj.upsilon)
        return QuenchedCouplingStepper(model.obj)
    if k == "HamiltonianNoise":
        return JumpDiffusiveStepper(p["gamma"], model.obj, p["gamma_tilde"], first_order=p["first_order"])
    if k == "MeasurementBasis":
        return HybridStepper(p["p1"], p["gamma"], record=p["record"])
    raise AssertionError(k)


def generator(model: Model):
    k, p = model.kind, model.params
    if k in ("Ideal", "Coupling", "MeasurementBasis"):
        return generator_transfer(lambda s: ideal_rhs(s, p["gamma"]))
    if k == "DetectorInit":
        return generator_transfer(lambda s: erroneous_rhs(s, model.obj))
    if k == "Directions":
        if isinstance(model.obj, (UniformArc, VonMises)):
            return continuous_generator(model.obj, p["gamma"])
        return avg_generator(model.obj, p["gamma"])
    if k == "HamiltonianNoise":
        return perturbed_generator(p["gamma"], model.obj, p["gamma_tilde"])
    raise AssertionError(k)


def lindblad_path(model: Model, r0, t) -> np.ndarray:
    k, p = model.kind, model.params
    if k in ("Ideal", "Coupling", "MeasurementBasis"):
        return ideal_lindblad(r0, p["gamma"], t)
    if k == "DetectorInit":
        return analytic_solution(r0, model.obj, t)
    if k == "Directions" and isinstance(model.obj, (UniformArc, VonMises)):
        return continuous_solution(r0, model.obj, p["gamma"], t)
    return lindblad_flow(generator(model), r0, t)


def simulate_rows(sc: Scenario, threads=None) -> np.ndarray:
    t = sc.grid.times
    if sc.mode == "lindblad":
        mean = lindblad_path(sc.model, sc.r0, t)
        se = np.zeros_like(mean)
    elif sc.mode == "single":
        mean = run_trajectory(make_stepper(sc.model), sc.r0, sc.grid, sc.seed, 0)
        se = np.zeros_like(mean)
    else:
        stats = run_ensemble(make_stepper(sc.model), sc.r0, sc.grid, sc.n, sc.seed, threads=threads)
        mean, se = stats.mean, stats.se
    F, D, L = bloch_metrics(mean, sc.target)
    return np.column_stack([t, mean, mean[:, 0] / 2, -mean[:, 1] / 2, (1 + mean[:, 2]) / 2, F, D, L, se])


def format_csv(rows: np.ndarray, header=CSV_HEADER) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_simulate(args) -> int:
    sc = parse_scenario(load_json(args.config), args.seed)
    t0 = time.perf_counter()
    rows = simulate_rows(sc, args.threads)
    text = format_csv(rows)
    _write(args.output, text)
    record = {
        "scenario": sc.raw,
        "scenario_digest": sc.digest,
        "tool_version": __version__,
        "seed": sc.seed,
        "wall_clock_s": time.perf_counter() - t0,
        "output_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "columns": list(CSV_HEADER),
        "rows": rows.tolist(),
    }
    _write(args.output + ".run.json", json.dumps(record, indent=1) + "\n")
    print(f"wrote {len(rows)} rows to {args.output} (digest {sc.digest[:12]})")
    return EXIT_OK


# Verification -------------------------------------------------------------------

def _check(name, deviation, tol):
    return (name, float(deviation), float(tol), bool(deviation <= tol))


def _rk4_bloch(rhs, r0, grid: TimeGrid, rate: float):
    """RK4 sampled on ``grid``, substepping so that rate * h <= 0.01 whatever dt the scenario uses."""
    sub = max(1, int(np.ceil(rate * grid.dt / 0.01)))
    ys = integrate_rk4(rhs, density_from_bloch(r0), grid.dt / sub, grid.n_steps * sub)
    return bloch_from_density(ys[::sub])


def oracle_checks(sc: Scenario):
    m, p, grid, r0 = sc.model, sc.model.params, sc.grid, sc.r0
    t = grid.times
    out = []
    if m.kind == "Ideal":
        rk = _rk4_bloch(lambda s: ideal_rhs(s, p["gamma"]), r0, grid, p["gamma"])
        out.append(_check("RK4 vs closed form", np.max(np.abs(rk - ideal_lindblad(r0, p["gamma"], t))), 1e-8))
        return out
    if m.kind == "DetectorInit":
        e = m.obj
        rate = max(e.gamma, 4 * e.kappa)
        rk = _rk4_bloch(lambda s: erroneous_rhs(s, e), r0, grid, rate)
        out.append(_check("analytic vs RK4", np.max(np.abs(rk - analytic_solution(r0, e, t))), 1e-6))
        long = TimeGrid(1e-3 / e.gamma * 10, 10000)  # gamma t = 100
        rk_long = _rk4_bloch(lambda s: erroneous_rhs(s, e), r0, long, rate)[-1]
        out.append(_check("stationary state (gamma t = 100)", np.max(np.abs(rk_long - stationary_bloch(e))), 1e-6))
        if 0 < e.a < 1 and e.a != 0.5:
            out.append(_check("ellipsoid residual", abs(ellipsoid_residual(stationary_bloch(e), e.a)), 1e-9))
        F, D, L = bloch_metrics(stationary_bloch(e))
        ex = stationary_quantifiers(e, "exact")
        out.append(_check("stationary quantifiers", max(abs(F - ex[0]), abs(D - ex[1]), abs(L - ex[2])), 1e-12))
        return out
    if m.kind == "Directions":
        if isinstance(m.obj, (UniformArc, VonMises)):
            r = continuous_stationary(m.obj)
            out.append(_check("stationary fidelity", abs(0.5 * (1 + r[2]) - continuous_fidelity(m.obj)), 1e-12))
            return out
        if "p" not in p:
            raise NoOracle("a general steering set has no closed form; use p and theta")
        rho, exact, _ = two_dir_stationary(p["p"], p["theta"])
        r_inf = lindblad_stationary(avg_generator(m.obj, p["gamma"]))
        out.append(_check("stationary state", np.max(np.abs(r_inf - bloch_from_density(rho))), 1e-12))
        Fq, Dq, Lq = two_dir_quantifiers(p["p"], p["theta"])
        out.append(_check("stationary quantifiers", max(abs(Fq - exact[0]), abs(Dq - exact[1]), abs(Lq - exact[2])), 1e-12))
        rk = _rk4_bloch(lambda s: avg_lindblad_rhs(s, m.obj, p["gamma"]), r0, grid, p["gamma"])
        out.append(_check("RK4 vs exponential flow", np.max(np.abs(rk - avg_lindblad_solution(r0, m.obj, p["gamma"], t))), 1e-8))
        return out
    if m.kind in ("Coupling", "MeasurementBasis"):
        flow = lindblad_flow(generator(m), r0, t)
        out.append(_check("flow vs closed form", np.max(np.abs(flow - ideal_lindblad(r0, p["gamma"], t))), 1e-10))
        if m.kind == "MeasurementBasis":
            J = np.sqrt(p["gamma"] / grid.dt)
            dev = blind_equivalence_check(plus_minus_family(p["p1"]), J, grid.dt, density_from_bloch(r0), min(grid.n_steps, 1000))
            out.append(_check("blind equivalence", dev, 1e-12))
        return out
    if m.kind == "HamiltonianNoise":
        A, B, gt, gamma = p["A"], p["B"], p["gamma_tilde"], p["gamma"]
        if B != "0" or A not in ("sz", "sx"):
            raise NoOracle("closed forms exist for A = sz or sx with B = 0")
        if A == "sz":
            flow = perturbed_solution(r0, gamma, m.obj, gt, t)
            out.append(_check("flow vs closed form", np.max(np.abs(flow - sigma_z_noise_solution(r0, gamma, gt, t))), 1e-10))
        else:
            r_inf = lindblad_stationary(perturbed_generator(gamma, m.obj, gt))
            z = 2 * sigma_x_noise_stationary(gamma, gt) - 1
            out.append(_check("stationary z", np.max(np.abs(r_inf - [0, 0, z])), 1e-12))
            exact, _ = stationary_quantifiers_sigma_x(gamma, gt)
            F, D, L = bloch_metrics(r_inf)
            out.append(_check("stationary quantifiers", max(abs(F - exact[0]), abs(D - exact[1]), abs(L - exact[2])), 1e-12))
        return out
    raise AssertionError(m.kind)


def cmd_verify(args) -> int:
    sc = parse_scenario(load_json(args.config), args.seed)
    try:
        checks = oracle_checks(sc)
    except NoOracle as exc:
        print(f"no oracle for this scenario: {exc}", file=sys.stderr)
        print("oracle-capable: Ideal, DetectorInit, Directions (p/theta or continuous), Coupling, "
              "HamiltonianNoise (A = sz or sx, B = 0), MeasurementBasis", file=sys.stderr)
        return EXIT_NO_ORACLE
    for name, dev, tol, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: max deviation {dev:.3e} (tolerance {tol:.0e})")
    return EXIT_OK if all(c[3] for c in checks) else EXIT_FAIL


# Sweeps --------------------------------------------------------------------------

SWEEP_MODELS = {
    "TwoDirection": ("p", "theta"),
    "DetectorInit": ("gamma", "kappa", "a", "phi"),
    "SigmaXNoise": ("gamma", "gamma_tilde"),
    "UniformArc": ("theta_tilde",),
    "VonMises": ("sigma",),
}


def _axis(spec, field):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return np.array([float(spec)]), False
    if isinstance(spec, dict):
        start, stop = _get(spec, "start", field), _get(spec, "stop", field)
        num = _get(spec, "num", field, kind=int)
        if num < 1:
            raise ConfigError(field + ".num", "must be at least 1")
        return np.linspace(start, stop, num), True
    raise ConfigError(field, "expected a number or {start, stop, num}")


def stationary_triple(kind: str, v: dict):
    if kind == "TwoDirection":
        return tuple(float(x) for x in two_dir_quantifiers(v["p"], v["theta"]))
    if kind == "DetectorInit":
        return tuple(stationary_quantifiers(ErroneousChannelParams(v["gamma"], v["kappa"], v["a"], v["phi"])))
    if kind == "SigmaXNoise":
        return tuple(stationary_quantifiers_sigma_x(v["gamma"], v["gamma_tilde"])[0])
    dist = UniformArc(v["theta_tilde"]) if kind == "UniformArc" else VonMises(v["sigma"])
    return tuple(float(x) for x in bloch_metrics(continuous_stationary(dist)))


def sweep_rows(raw: dict):
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"must be {SCHEMA_VERSION}")
    model = raw.get("model")
    if not isinstance(model, dict) or model.get("type") not in SWEEP_MODELS:
        raise ConfigError("model.type", f"must be one of {tuple(SWEEP_MODELS)}")
    kind = model["type"]
    names = SWEEP_MODELS[kind]
    axes, ranged = [], 0
    for name in names:
        if name not in model:
            if kind == "DetectorInit" and name == "phi":
                model = dict(model, phi=0.0)
            else:
                raise ConfigError(f"model.{name}", "missing")
        ax, is_range = _axis(model[name], f"model.{name}")
        ranged += is_range
        axes.append(ax)
    if ranged > 2:
        raise ConfigError("model", f"at most 2 ranged parameters are allowed, got {ranged}")
    rows = []
    for combo in itertools.product(*axes):
        v = dict(zip(names, combo))
        try:
            rows.append(list(combo) + list(stationary_triple(kind, v)))
        except ValueError as exc:
            raise ConfigError("model", f"at {v}: {exc}") from None
    return list(names) + ["F", "D1", "L"], np.array(rows, dtype=float)


def cmd_sweep(args) -> int:
    header, rows = sweep_rows(load_json(args.config))
    _write(args.output, format_csv(rows, header))
    print(f"wrote {len(rows)} rows to {args.output}")
    return EXIT_OK


# Entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsteer", description="Measurement-based qubit steering simulations.")
    ap.add_argument("--version", action="version", version=f"qsteer {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="run a scenario and write CSV plus a run record")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    s.set_defaults(func=cmd_simulate)
    v = sub.add_parser("verify", help="compare a scenario with its closed-form oracle")
    v.add_argument("-c", "--config", required=True)
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_verify)
    w = sub.add_parser("sweep", help="tabulate stationary quantifiers over a parameter grid")
    w.add_argument("-c", "--config", required=True)
    w.add_argument("-o", "--output", required=True)
    w.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrajectoryError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UnphysicalStateError, RegimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
