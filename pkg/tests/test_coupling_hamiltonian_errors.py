import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsteer.coupling_hamiltonian_errors import (
    SIGMA_Z_BLOCKS, DiscreteSet, Gaussian, JumpDiffusiveStepper, NoiseParams, PerturbationBlocks,
    QuenchedCouplingStepper, WhiteNoise, WhiteNoiseCouplingStepper, commutation_checks, coupling_error_rhs,
    coupling_solution, effective_rate, jump_diffusive_step, perturbed_generator, perturbed_lindblad_rhs,
    perturbed_solution, sigma_x_noise_stationary, sigma_z_noise_solution, stationary_quantifiers_sigma_x,
    time_ordered_identity_error, whitenoise_coupling_step,
)
from qsteer.protocol_ideal import IdealJumpStepper, ideal_lindblad
from qsteer.qmat import I2, SM, SP, SX, SY, SZ, bloch_from_density, density_from_bloch, dissipator, lindblad_stationary
from qsteer.quantifiers import bloch_metrics
from qsteer.stoch import Diagnostics, RngStream, TimeGrid, run_ensemble


@st.composite
def bloch_vectors(draw):
    v = np.array([draw(st.floats(-1, 1)) for _ in range(3)])
    n = np.linalg.norm(v)
    return v / n if n > 1 else v


@st.composite
def hermitian(draw, scale=1.0):
    c = [draw(st.floats(-scale, scale)) for _ in range(4)]
    return c[0] * I2 + c[1] * SX + c[2] * SY + c[3] * SZ


@st.composite
def complex2x2(draw):
    v = [draw(st.floats(-1, 1)) for _ in range(8)]
    return np.array(v[:4]).reshape(2, 2) + 1j * np.array(v[4:]).reshape(2, 2)


def test_effective_rates():
    assert effective_rate(DiscreteSet((1.0, 2.0), (0.5, 0.5), 0.1)) == pytest.approx(0.25)
    assert effective_rate(DiscreteSet((0.0, 3.0), (0.8, 0.2), 0.05)) == pytest.approx(0.09)
    assert effective_rate(Gaussian(2.0, 0.1)) == pytest.approx(0.4)
    assert effective_rate(WhiteNoise(0.3)) == pytest.approx(0.09)
    with pytest.raises(TypeError):
        effective_rate(0.3)


def test_distribution_validation():
    with pytest.raises(ValueError):
        DiscreteSet((1.0,), (0.5, 0.5), 0.1)
    with pytest.raises(ValueError):
        DiscreteSet((1.0, 2.0), (0.7, 0.7), 0.1)
    with pytest.raises(ValueError):
        DiscreteSet((0.0,), (1.0,), 0.1)
    with pytest.raises(ValueError):
        DiscreteSet((np.pi / 0.1,), (1.0,), 0.1)  # J dt = pi never couples
    with pytest.raises(ValueError):
        Gaussian(0.0, 0.1)
    with pytest.raises(ValueError):
        WhiteNoise(-1.0)


def test_averaged_coupling_dynamics_is_rescaled_ideal():
    dist = Gaussian(1.5, 0.04)
    rho = density_from_bloch([0.2, 0.1, -0.3])
    np.testing.assert_allclose(coupling_error_rhs(rho, dist), 0.09 * dissipator(SP, rho))
    t = np.linspace(0, 10, 6)
    np.testing.assert_allclose(coupling_solution([0.2, 0.1, -0.3], dist, t), ideal_lindblad([0.2, 0.1, -0.3], 0.09, t))


def test_blind_white_noise_steps_converge_at_first_order():
    ups, T, r0 = 0.5, 2.0, [0.4, 0.0, -0.7]
    ref = coupling_solution(r0, WhiteNoise(ups), T)
    errs = []
    for n in (200, 400):
        rho = density_from_bloch(r0)
        for _ in range(n):
            rho = whitenoise_coupling_step(rho, ups, T / n, blind=True)
        errs.append(np.max(np.abs(bloch_from_density(rho) - ref)))
    assert 1.8 < errs[0] / errs[1] < 2.2


@pytest.mark.parametrize("stepper, dt", [
    (WhiteNoiseCouplingStepper(0.5), 0.01),
    (QuenchedCouplingStepper(DiscreteSet((10.0, 30.0), (0.6, 0.4), 0.01)), 0.01),
    (QuenchedCouplingStepper(Gaussian(20.0, 0.01)), 0.01),
])
def test_sampled_couplings_reproduce_the_averaged_mean(stepper, dt):
    dist = getattr(stepper, "dist", WhiteNoise(0.5))
    r0 = [0.6, -0.2, -0.5]
    stats = run_ensemble(stepper, r0, TimeGrid(dt, 300), 3000, seed=17)
    ref = coupling_solution(r0, dist, stats.times)
    assert np.all(np.abs(stats.mean - ref) <= 4 * stats.se + 3e-3)


def test_quenched_stepper_guards():
    with pytest.raises(TypeError):
        QuenchedCouplingStepper(WhiteNoise(1.0))
    st_ = QuenchedCouplingStepper(Gaussian(1.0, 0.01))
    with pytest.raises(ValueError):
        st_.step(np.zeros((1, 3)), np.full((1, 2), 0.5), np.zeros((1, 1)), 0.02, Diagnostics())


def test_sampled_white_noise_step_is_physical():
    stream = RngStream(2)
    rho = density_from_bloch([0.3, 0.3, -0.3])
    for _ in range(50):
        rho = whitenoise_coupling_step(rho, 2.0, 0.05, stream)
    assert np.linalg.norm(bloch_from_density(rho)) <= 1 + 1e-12


def test_perturbation_blocks():
    h = np.kron(I2, SY) + np.kron(SX, SZ)
    blocks = PerturbationBlocks.from_hds(h)
    np.testing.assert_allclose(blocks.hds(), h)
    np.testing.assert_allclose(PerturbationBlocks.system_only(SX).hds(), np.kron(I2, SX))
    with pytest.raises(ValueError):
        PerturbationBlocks(SP, SM, SZ)
    with pytest.raises(ValueError):
        PerturbationBlocks.from_hds(np.kron(SP, I2))
    assert NoiseParams(0.3, 2.0).gamma_tilde == pytest.approx(0.18)


@given(hermitian(), complex2x2(), hermitian(), hermitian(), bloch_vectors())
def test_system_block_c_drops_out(A, B, C1, C2, r):
    rho = density_from_bloch(r)
    a = perturbed_lindblad_rhs(rho, 0.3, PerturbationBlocks(A, B, C1), 0.2)
    b = perturbed_lindblad_rhs(rho, 0.3, PerturbationBlocks(A, B, C2), 0.2)
    np.testing.assert_allclose(a, b, atol=1e-14)


@given(bloch_vectors(), st.floats(0.01, 2), st.floats(0, 1))
def test_sigma_z_noise_closed_form(r0, gamma, gt):
    t = np.linspace(0, 10, 11)
    np.testing.assert_allclose(sigma_z_noise_solution(r0, gamma, gt, t),
                               perturbed_solution(r0, gamma, SIGMA_Z_BLOCKS, gt, t), atol=1e-12)


@given(st.floats(0.01, 2), st.floats(0, 2))
def test_sigma_x_noise_stationary_state(gamma, gt):
    blocks = PerturbationBlocks.system_only(SX)
    r = lindblad_stationary(perturbed_generator(gamma, blocks, gt))
    assert (1 + r[2]) / 2 == pytest.approx(sigma_x_noise_stationary(gamma, gt), abs=1e-12)
    exact, _ = stationary_quantifiers_sigma_x(gamma, gt)
    np.testing.assert_allclose(tuple(exact), bloch_metrics(r), atol=1e-12)


def test_sigma_x_leading_order_is_accurate_to_second_order():
    errs = []
    for e in (0.02, 0.01):
        exact, lead = stationary_quantifiers_sigma_x(1.0, e)
        errs.append(max(abs(a - b) for a, b in zip(exact, lead)))
    assert 3.5 < errs[0] / errs[1] < 4.5
    with pytest.raises(ValueError):
        stationary_quantifiers_sigma_x(0.0, 0.1)


@given(st.lists(bloch_vectors(), min_size=1, max_size=8), st.floats(0.001, 0.2))
def test_no_perturbation_reduces_to_ideal_jump_step(rs, dt):
    r = np.array(rs)
    u = np.linspace(0.001, 0.999, len(r))[:, None]
    g = np.ones((len(r), 1))
    zero = np.zeros((2, 2))
    a = JumpDiffusiveStepper(0.4, PerturbationBlocks(zero, zero, zero), 0.7).step(r, u, g, dt, Diagnostics())
    b = IdealJumpStepper(0.4).step(r, u, None, dt, Diagnostics())
    np.testing.assert_array_equal(a, b)


def test_jump_diffusive_mean_follows_perturbed_lindbladian():
    blocks = PerturbationBlocks(SX + 0.5 * SZ, 0.4 * SM, SZ)
    r0 = [0.3, 0.2, -0.8]
    stats = run_ensemble(JumpDiffusiveStepper(0.5, blocks, 0.2), r0, TimeGrid(0.01, 300), 3000, seed=11)
    ref = perturbed_solution(r0, 0.5, blocks, 0.2, stats.times)
    assert np.all(np.abs(stats.mean - ref) <= 4 * stats.se + 3e-3)


def test_first_order_diffusion_approaches_exact_rotation():
    # Same increments: the truncated form differs from the rotation at O(dX^2) = O(dt).
    blocks = PerturbationBlocks(SX + 0.5 * SZ, np.zeros((2, 2)), SZ)
    r = np.array([[0.3, 0.2, -0.8], [0.0, 0.5, 0.1]])
    u, g = np.ones((2, 1)), np.array([[0.7], [-1.3]])
    errs = []
    for dt in (1e-3, 5e-4):
        exact = JumpDiffusiveStepper(0.5, blocks, 0.2).step(r, u, g, dt, Diagnostics())
        trunc = JumpDiffusiveStepper(0.5, blocks, 0.2, first_order=True).step(r, u, g, dt, Diagnostics())
        errs.append(np.max(np.abs(exact - trunc)))
    assert 1.8 < errs[0] / errs[1] < 2.2


def test_exact_diffusion_preserves_purity():
    # With B = 0 clicks land on a pure state and the diffusion is a rotation.
    blocks = PerturbationBlocks(SX, np.zeros((2, 2)), SZ)
    stats = run_ensemble(JumpDiffusiveStepper(0.5, blocks, 0.3), [0.0, 0.6, 0.8], TimeGrid(0.02, 200), 64,
                         seed=4, keep_paths=True)
    np.testing.assert_allclose(np.linalg.norm(stats.paths, axis=-1), 1, atol=1e-12)
    rho = jump_diffusive_step(density_from_bloch([0.0, 0.6, 0.8]), 0.5, blocks, 0.3, 0.02, RngStream(1))
    assert abs(np.trace(rho @ rho).real - 1) < 1e-12


def test_commutation_is_exact_without_noise():
    rep = commutation_checks(0.2, PerturbationBlocks(SX, 0.5 * SM, SZ), 0.0, 1.0, 8, substeps=10,
                             identity_substeps=20)
    assert all(np.max(d) < 1e-13 for d in rep.deviations().values())
    assert rep.identity_error < 1e-13
    assert rep.passed()


@given(hermitian(0.5), complex2x2(), hermitian(0.5))
def test_interaction_picture_identity(A, B, C):
    err = time_ordered_identity_error(1.0, PerturbationBlocks(A, 0.5 * B, C), 0.3, 1.0, substeps=100)
    assert err < 1e-9
