import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import unitary_group

from qsteer.measurement_basis_errors import (
    CANONICAL, PLUS_MINUS, HybridStepper, MeasurementBasisFamily, blind_equivalence_check, canonical_family,
    detector_kraus, hybrid_sme_step, plus_minus_family, random_basis_discrete_step,
)
from qsteer.protocol_ideal import JumpChannel, ideal_lindblad, kraus_pair
from qsteer.qmat import I2, RHO_TARGET, SP, dag, density_from_bloch, validate_density
from qsteer.stoch import Diagnostics, RngStream, TimeGrid, run_ensemble


@st.composite
def bloch_vectors(draw):
    v = np.array([draw(st.floats(-1, 1)) for _ in range(3)])
    n = np.linalg.norm(v)
    return v / n if n > 1 else v


def test_family_validation():
    with pytest.raises(ValueError):
        MeasurementBasisFamily((2 * CANONICAL,), (1.0,))
    with pytest.raises(ValueError):
        MeasurementBasisFamily((CANONICAL, PLUS_MINUS), (1.0,))
    with pytest.raises(ValueError):
        MeasurementBasisFamily((CANONICAL, PLUS_MINUS), (0.3, 0.3))
    with pytest.raises(ValueError):
        plus_minus_family(1.5)
    assert plus_minus_family(0.25).probs == (0.25, 0.75)
    assert canonical_family().probs == (1.0,)


@given(st.floats(0, 20), st.floats(0, 1), st.integers(0, 2**31 - 1))
def test_kraus_operators_are_complete_in_any_basis(J, dt, seed):
    basis = unitary_group.rvs(2, random_state=seed)
    Ms = detector_kraus(J, dt, basis)
    np.testing.assert_allclose(sum(dag(M) @ M for M in Ms), I2, atol=1e-12)


@given(st.floats(0.01, 5), st.floats(0.001, 1), bloch_vectors())
def test_canonical_branches_match_the_ideal_kraus_pair(J, dt, r):
    rho = density_from_bloch(r)
    for M, K in zip(detector_kraus(J, dt), kraus_pair(J, dt)):
        np.testing.assert_allclose(M @ rho @ dag(M), K @ rho @ dag(K), atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.floats(0, 1), st.floats(0.05, 3), bloch_vectors())
def test_blind_dynamics_ignore_the_basis(seed, p, J, r):
    family = MeasurementBasisFamily((unitary_group.rvs(2, random_state=seed), PLUS_MINUS), (p, 1 - p))
    assert blind_equivalence_check(family, J, 0.1, density_from_bloch(r), 20) < 1e-12


def test_readout_frequencies_follow_born_rule():
    J, dt = 2.0, 0.3
    rho = density_from_bloch([0.4, -0.1, -0.5])
    family = plus_minus_family(0.0)
    stream = RngStream(6)
    outcomes = np.array([random_basis_discrete_step(rho, family, J, dt, stream)[1] for _ in range(20000)])
    M1 = detector_kraus(J, dt, PLUS_MINUS)[1]
    p1 = np.trace(M1 @ rho @ dag(M1)).real
    assert abs(outcomes.mean() - p1) < 4 * np.sqrt(p1 * (1 - p1) / 20000)


def test_plus_minus_readout_is_weak_while_clicks_are_strong():
    J, dt = 1.0, 1e-3
    rho = density_from_bloch([0.2, 0.0, -0.6])
    for a in range(2):
        M = detector_kraus(J, dt, PLUS_MINUS)[a]
        post = M @ rho @ dag(M)
        post /= np.trace(post).real
        assert np.max(np.abs(post - rho)) < 2 * J * dt
    M1 = detector_kraus(J, dt)[1]
    click = M1 @ rho @ dag(M1)
    np.testing.assert_allclose(click / np.trace(click).real, RHO_TARGET, atol=1e-12)


def test_sampled_step_returns_valid_posterior():
    i, a, post = random_basis_discrete_step(density_from_bloch([0, 0, -1.0]), plus_minus_family(0.5), 1.5, 0.2,
                                            RngStream(3))
    assert i in (0, 1) and a in (0, 1)
    validate_density(post)


def test_hybrid_validation():
    with pytest.raises(ValueError):
        HybridStepper(1.2, 0.1)
    with pytest.raises(ValueError):
        HybridStepper(0.5, 0.1, record="poisson")


@given(st.lists(bloch_vectors(), min_size=1, max_size=6), st.floats(0.001, 0.1))
def test_hybrid_with_p1_one_is_the_jump_unravelling(rs, dt):
    r = np.array(rs)
    u = np.column_stack([np.zeros(len(r)), np.linspace(0.01, 0.99, len(r)), np.full(len(r), 0.5)])
    out = HybridStepper(1.0, 0.3).step(r, u, np.zeros((len(r), 1)), dt, Diagnostics())
    ref = JumpChannel([(0.3, SP)])(r, u[:, 1], dt, Diagnostics())
    np.testing.assert_array_equal(out, ref)


@given(bloch_vectors(), st.floats(-3, 3))
def test_diffusive_branch_keeps_pure_states_pure(r, g):
    n = np.linalg.norm(r)
    if n < 1e-3:
        return
    r = (r / n)[None]
    u = np.array([[1.0, 0.5, 0.5]])
    out = HybridStepper(0.0, 0.4).step(r, u, np.array([[g]]), 0.01, Diagnostics())
    assert abs(np.linalg.norm(out) - 1) < 1e-12


@pytest.mark.parametrize("record", ["gaussian", "binary"])
def test_record_drift(record):
    # E[dZ] = <L + L^dagger> dt and Var[dZ] = dt to leading order.
    st_ = HybridStepper(0.0, 0.5, record=record)
    r0 = np.array([0.3, 0.6, -0.2])
    n, dt = 100_000, 0.01
    stream = RngStream(10)
    u = stream.uniform((n, 3))
    u[:, 0] = 1.0
    g = stream.normal((n, 1))
    _, _, rec = st_.step_record(np.tile(r0, (n, 1)), u, g, dt, Diagnostics())
    rho = density_from_bloch(r0)
    drift = np.trace((st_.L + dag(st_.L)) @ rho).real * dt
    assert abs(rec.mean() - drift) < 4 * rec.std() / np.sqrt(n)
    assert rec.var() == pytest.approx(dt, rel=0.02)


@pytest.mark.parametrize("record", ["gaussian", "binary"])
@pytest.mark.parametrize("p1", [0.0, 0.4])
def test_hybrid_ensemble_mean_is_the_ideal_lindbladian(record, p1):
    r0 = [0.5, -0.3, -0.6]
    stats = run_ensemble(HybridStepper(p1, 0.5, record=record), r0, TimeGrid(0.01, 300), 3000, seed=13)
    ref = ideal_lindblad(r0, 0.5, stats.times)
    assert np.all(np.abs(stats.mean - ref) <= 4 * stats.se + 3e-3)


def test_single_hybrid_step():
    stream = RngStream(1)
    seen = set()
    for _ in range(40):
        branch, value, post = hybrid_sme_step(density_from_bloch([0.1, 0.2, -0.3]), 0.5, 0.4, 0.01, stream)
        seen.add(branch)
        assert isinstance(value, bool) if branch == "jump" else isinstance(value, float)
        validate_density(post)
    assert seen == {"jump", "diffusive"}
