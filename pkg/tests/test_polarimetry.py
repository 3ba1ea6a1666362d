"""Stokes reduction, shot-noise normalization, loss/GAWBS models, extraction."""

import math

import numpy as np
import pytest

from polsqueeze import (
    EnsembleConfig,
    ExperimentSpec,
    FiberSpec,
    PropagationModel,
    Propagator,
    StepperConfig,
    make_grid,
)
from polsqueeze.errors import CalibrationError, ParameterError
from polsqueeze.field import FieldState, init_coherent_sech, trajectory_rng
from polsqueeze.polarimetry import (
    StokesSampleSet,
    apply_gawbs,
    apply_lumped_loss,
    apply_lumped_loss_db,
    dark_plane_variance,
    extract_squeezing,
    fit_gawbs_coefficient,
    infer_lossless,
    shot_noise_reference,
    single_beam_quadrature_variance,
    stokes_samples,
)
from polsqueeze.raman import RamanModel

RAMAN_OFF = RamanModel(enabled=False)


@pytest.fixture(scope="module")
def grid():
    return make_grid(1024, 10e-12)


@pytest.fixture(scope="module")
def spec():
    return ExperimentSpec().with_energy(100e-12)


def kerr_model(input_noise=True):
    return PropagationModel(kerr_enabled=True, raman=RAMAN_OFF,
                            tod_enabled=False, loss_enabled=False,
                            input_noise_enabled=input_noise)


@pytest.fixture(scope="module")
def squeezed(spec, grid):
    """Shared Kerr-squeezed ensemble and its shot-noise reference."""
    prop = Propagator(spec, grid, kerr_model(),
                      StepperConfig(n_steps=400, scheme="strang"))
    mom = prop.run_moments(EnsembleConfig(n_trajectories=400, master_seed=21))
    samples = StokesSampleSet(mom.n_x[mom.kept], mom.n_y[mom.kept],
                              mom.cross[mom.kept])
    snl = shot_noise_reference(spec, grid,
                               EnsembleConfig(n_trajectories=4000, master_seed=22))
    return samples, snl


def test_circular_state(spec, grid):
    """Equal coherent pulses at pi/2 phase: s1 = s2 = 0, s3 = s0."""
    state = init_coherent_sech(spec, grid)
    samples = stokes_samples([state, state])
    assert np.allclose(samples.s1, 0.0, atol=1e-6)
    assert np.allclose(samples.s2, 0.0, atol=1e-6 * samples.s0[0])
    assert np.allclose(samples.s3, samples.s0, rtol=1e-12)


def test_diagonal_state(spec, grid):
    """Zero relative phase: s2 = s0, s3 = 0."""
    state = init_coherent_sech(spec, grid)
    samples = stokes_samples([state, state], relative_phase=0.0)
    assert np.allclose(samples.s2, samples.s0, rtol=1e-12)
    assert np.allclose(samples.s3, 0.0, atol=1e-6 * samples.s0[0])


def test_vacuum_only_means(grid, spec):
    """Vacuum ensemble: all Stokes means vanish within sampling error."""
    zero = ExperimentSpec().with_energy(0.0)
    prop = Propagator(zero, grid, kerr_model(),
                      StepperConfig(n_steps=1, scheme="strang"))
    mom = prop.run_moments(EnsembleConfig(n_trajectories=3000, master_seed=4))
    s = StokesSampleSet(mom.n_x, mom.n_y, mom.cross)
    # s1 is a difference of two half-photon sums: std = sqrt(n_bins/2) photons
    scale = math.sqrt(grid.n_points / 2.0) / math.sqrt(3000)
    assert abs(np.mean(s.s1)) < 5 * scale
    assert abs(np.mean(s.s2)) < 5 * scale
    assert abs(np.mean(s.s3)) < 5 * scale


def test_dark_plane_variance_deterministic_zero(spec, grid):
    state = init_coherent_sech(spec, grid)
    samples = stokes_samples([state, state.copy()])
    assert dark_plane_variance(samples, 0.3) == pytest.approx(0.0, abs=1e-3)


def test_dark_plane_variance_periodicity(squeezed):
    samples, _ = squeezed
    for th in (0.0, 0.4, 1.1):
        assert dark_plane_variance(samples, th) == pytest.approx(
            dark_plane_variance(samples, th + math.pi), rel=1e-12)


def test_coherent_variance_equals_reference(spec, grid):
    """gamma = 0 ensemble: dark-plane variance sits at the shot-noise level."""
    lin = ExperimentSpec(fiber=FiberSpec(n2=0.0),
                         pulse=spec.pulse)
    prop = Propagator(lin, grid, kerr_model(),
                      StepperConfig(n_steps=1, scheme="strang"))
    n_tr = 4000
    mom = prop.run_moments(EnsembleConfig(n_trajectories=n_tr, master_seed=5))
    samples = StokesSampleSet(mom.n_x, mom.n_y, mom.cross)
    snl = shot_noise_reference(lin, grid,
                               EnsembleConfig(n_trajectories=n_tr, master_seed=6))
    v = dark_plane_variance(samples, 0.7)
    assert v / snl == pytest.approx(1.0, abs=5 * math.sqrt(2.0 / (n_tr - 1)))


def test_reference_self_normalization(spec, grid):
    snl = shot_noise_reference(spec, grid,
                               EnsembleConfig(n_trajectories=3000, master_seed=1))
    assert 10 * math.log10(snl / snl) == 0.0
    # and it matches the photon-number scale <s0> = 2 nbar
    nbar2 = spec.pulse.total_energy / spec.pulse.photon_energy
    assert snl == pytest.approx(nbar2, rel=0.05)


def test_reference_linear_in_energy(grid):
    e1 = ExperimentSpec().with_energy(40e-12)
    e2 = ExperimentSpec().with_energy(80e-12)
    n_tr = 4000
    s1 = shot_noise_reference(e1, grid, EnsembleConfig(n_trajectories=n_tr, master_seed=2))
    s2 = shot_noise_reference(e2, grid, EnsembleConfig(n_trajectories=n_tr, master_seed=3))
    assert s2 / s1 == pytest.approx(2.0, abs=8 * math.sqrt(2.0 / (n_tr - 1)))


def test_extract_coherent_is_flat(spec, grid):
    lin = ExperimentSpec(fiber=FiberSpec(n2=0.0), pulse=spec.pulse)
    prop = Propagator(lin, grid, kerr_model(),
                      StepperConfig(n_steps=1, scheme="strang"))
    n_tr = 5000
    mom = prop.run_moments(EnsembleConfig(n_trajectories=n_tr, master_seed=8))
    samples = StokesSampleSet(mom.n_x, mom.n_y, mom.cross)
    snl = shot_noise_reference(lin, grid,
                               EnsembleConfig(n_trajectories=8000, master_seed=9))
    res = extract_squeezing(samples, snl)
    bound = 10 * math.log10(1 + 5 * math.sqrt(2.0 / (n_tr - 1)))
    assert abs(res.squeezing_db) < bound
    assert abs(res.antisqueezing_db) < bound


def test_extract_matches_eigenvalue_oracle(squeezed):
    """Grid + parabolic refinement reproduces the exact covariance eigenvalues."""
    samples, snl = squeezed
    res = extract_squeezing(samples, snl)
    cov = np.cov(np.vstack([samples.s1, samples.s2]), ddof=1)
    evals = np.linalg.eigvalsh(cov)
    assert res.v_min == pytest.approx(evals[0] / snl, rel=1e-6)
    assert res.v_max == pytest.approx(evals[1] / snl, rel=1e-6)
    vecs = np.linalg.eigh(cov)[1]
    ang = math.degrees(math.atan2(vecs[1, 0], vecs[0, 0]))
    ang = (ang + 90.0) % 180.0 - 90.0
    assert res.theta_sq_deg == pytest.approx(ang, abs=0.05)


def test_extract_extrema_are_orthogonal(squeezed):
    samples, snl = squeezed
    res = extract_squeezing(samples, snl)
    th_min = res.theta_sq_deg
    curve = res.variance_db
    th_max = math.degrees(res.theta_grid[np.argmax(curve)])
    sep = abs(((th_max - th_min) + 90.0) % 180.0 - 90.0)
    assert sep == pytest.approx(90.0, abs=0.5)


def test_extract_grid_doubling_stable(squeezed):
    samples, snl = squeezed
    r1 = extract_squeezing(samples, snl, theta_points=720)
    r2 = extract_squeezing(samples, snl, theta_points=1440)
    assert abs(r1.squeezing_db - r2.squeezing_db) < 0.01
    assert abs(r1.antisqueezing_db - r2.antisqueezing_db) < 0.01


def test_extract_kerr_angle_is_negative(squeezed):
    """Kerr shear puts the variance minimum below the amplitude axis."""
    samples, snl = squeezed
    res = extract_squeezing(samples, snl)
    assert -45.0 < res.theta_sq_deg < 0.0
    assert res.squeezing_db < -3.0
    assert res.antisqueezing_db > 10.0


def test_low_confidence_flag(squeezed):
    samples, snl = squeezed
    small = StokesSampleSet(samples.n_x[:50], samples.n_y[:50], samples.cross[:50])
    assert extract_squeezing(small, snl).low_confidence
    assert not extract_squeezing(samples, snl).low_confidence


def test_uncertainty_product(squeezed):
    """V(th_sq) V(th_sq + 90 deg) >= 1 within sampling error."""
    samples, snl = squeezed
    res = extract_squeezing(samples, snl)
    err = 3.0 * (res.err_v_min * res.v_max + res.err_v_max * res.v_min)
    assert res.uncertainty_product() >= 1.0 - err


def test_two_beam_equals_single_beam_quadrature(spec, grid):
    """Var(S_theta) = <S0> Var(X_theta) for the squeezed beams."""
    prop = Propagator(spec, grid, kerr_model(),
                      StepperConfig(n_steps=400, scheme="strang"))
    fields = prop.propagate_ensemble(EnsembleConfig(n_trajectories=300, master_seed=31))
    samples = stokes_samples(fields)
    theta = -0.05
    v_stokes = dark_plane_variance(samples, theta)
    vx = single_beam_quadrature_variance(fields, theta, pol="x")
    vy = single_beam_quadrature_variance(fields, theta, pol="y")
    s0 = float(np.mean(samples.s0))
    # two independent beams: Var(S) = <n_x> Vx + <n_y> Vy = <S0>/2 (Vx + Vy)
    expected = 0.5 * s0 * (vx + vy)
    assert v_stokes == pytest.approx(expected, rel=0.25)


# -- loss model --------------------------------------------------------------

def test_loss_keeps_shot_noise_fixed():
    for eta in (0.2, 0.5, 0.87, 1.0):
        assert apply_lumped_loss_db(0.0, eta) == pytest.approx(0.0, abs=1e-12)


def test_loss_paper_point():
    """-10.42 dB through eta = 0.87 emerges at -6.80 dB."""
    v_in = 0.0907
    out_db = apply_lumped_loss_db(10 * math.log10(v_in), 0.87)
    assert 0.87 * v_in + 0.13 == pytest.approx(0.2089, abs=2e-4)
    assert out_db == pytest.approx(-6.80, abs=0.01)


def test_loss_identity_at_unity(squeezed):
    samples, snl = squeezed
    res = extract_squeezing(samples, snl)
    out = apply_lumped_loss(res, 1.0)
    assert out.v_min == pytest.approx(res.v_min, rel=1e-12)
    assert out.squeezing_db == pytest.approx(res.squeezing_db, rel=1e-12)


def test_loss_composition():
    """Loss at eta1 then eta2 equals loss at eta1 eta2 exactly."""
    v = -8.0
    once = apply_lumped_loss_db(apply_lumped_loss_db(v, 0.9), 0.8)
    combined = apply_lumped_loss_db(v, 0.72)
    assert once == pytest.approx(combined, abs=1e-12)


def test_infer_lossless_round_trip():
    for v_db in (-12.0, -3.0, 0.0, 5.0):
        through = apply_lumped_loss_db(v_db, 0.87)
        back = infer_lossless(through, 0.87)
        assert back == pytest.approx(v_db, abs=1e-12)


def test_infer_lossless_paper_value():
    assert infer_lossless(-6.8, 0.87) == pytest.approx(-10.42, abs=0.05)


def test_infer_lossless_unphysical():
    # V = 10^-0.89 = 0.1288 < 1 - 0.87
    with pytest.raises(ParameterError):
        infer_lossless(-8.9, 0.87)


def test_loss_eta_bounds(squeezed):
    samples, snl = squeezed
    res = extract_squeezing(samples, snl)
    with pytest.raises(ParameterError):
        apply_lumped_loss(res, 0.0)
    with pytest.raises(ParameterError):
        apply_lumped_loss(res, 1.1)


def test_sample_level_loss_matches_variance_map(squeezed):
    """Transforming samples and transforming the result agree: random beats
    only add shot-scale noise, so the extrema line up tightly."""
    samples, snl = squeezed
    eta = 0.8
    res0 = extract_squeezing(samples, snl)
    lossy = apply_lumped_loss(samples, eta, rng=np.random.default_rng(12))
    res1 = extract_squeezing(lossy, snl * eta)
    target = apply_lumped_loss(res0, eta)
    n = samples.n_trajectories
    beat_jitter = 5 * (1 - eta) * math.sqrt(2.0 / (n - 1))
    assert res1.v_min == pytest.approx(target.v_min, abs=beat_jitter)
    assert res1.v_max == pytest.approx(target.v_max, rel=0.02)
    assert float(np.mean(lossy.s0)) == pytest.approx(
        eta * float(np.mean(samples.s0)), rel=1e-6)


# -- GAWBS -------------------------------------------------------------------

def test_gawbs_zero_coefficient_identity(squeezed):
    samples, _ = squeezed
    out = apply_gawbs(samples, 0.0, 100e-12, np.random.default_rng(0))
    assert np.array_equal(out.cross, samples.cross)
    assert np.array_equal(out.n_x, samples.n_x)


def test_gawbs_only_adds_noise(squeezed):
    """Squeezing after jitter is never deeper, antisqueezing never smaller."""
    samples, snl = squeezed
    res0 = extract_squeezing(samples, snl)
    res1 = extract_squeezing(
        apply_gawbs(samples, 2e4, 100e-12, np.random.default_rng(3)), snl)
    assert res1.squeezing_db >= res0.squeezing_db - 3 * res0.sampling_error_db
    assert res1.v_max >= res0.v_max * 0.95


def test_gawbs_rotates_signed_angle_toward_zero(squeezed):
    """theta_sq increases (toward 0 from below) as the coefficient grows."""
    samples, snl = squeezed
    angles = []
    for g in (0.0, 1e4, 4e4):
        s = apply_gawbs(samples, g, 100e-12, np.random.default_rng(9))
        angles.append(extract_squeezing(s, snl).theta_sq_deg)
    assert angles[0] < angles[1] < angles[2] < 0.5


def test_gawbs_preserves_mean_photon_number(squeezed):
    samples, _ = squeezed
    out = apply_gawbs(samples, 1e5, 100e-12, np.random.default_rng(1))
    assert np.array_equal(out.n_x, samples.n_x)
    assert np.allclose(np.abs(out.cross), np.abs(samples.cross), rtol=1e-12)


def test_gawbs_on_fields(spec, grid):
    state = init_coherent_sech(spec, grid)
    out = apply_gawbs(state, 1e4, 100e-12, np.random.default_rng(2))
    assert out.photon_numbers()[0] == pytest.approx(state.photon_numbers()[0],
                                                    rel=1e-12)
    # relative phase between the modes moved
    z0 = (np.conj(state.pol_x) * state.pol_y).sum()
    z1 = (np.conj(out.pol_x) * out.pol_y).sum()
    assert abs(np.angle(z1) - np.angle(z0)) > 0.0


def test_gawbs_fit_round_trip(squeezed):
    """Synthetic angles at a known coefficient are recovered within 5%."""
    samples, snl = squeezed
    g_true = 3e4
    energies = [60e-12, 100e-12, 140e-12]

    def theta_for(energy, g):
        if g > 0:
            s = apply_gawbs(samples, g, energy, np.random.default_rng(77))
        else:
            s = samples
        return extract_squeezing(s, snl).theta_sq_deg

    measured = [(e, abs(theta_for(e, g_true))) for e in energies]
    fit = fit_gawbs_coefficient(measured, theta_for, g_max=2e5)
    assert fit.coefficient == pytest.approx(g_true, rel=0.05)
    assert len(fit.residuals_deg) == 3


def test_gawbs_fit_zero_when_consistent(squeezed):
    """Angles equal to the jitter-free simulation fit to g near zero."""
    samples, snl = squeezed

    def theta_for(energy, g):
        s = apply_gawbs(samples, g, energy, np.random.default_rng(5)) if g > 0 else samples
        return extract_squeezing(s, snl).theta_sq_deg

    base = abs(theta_for(100e-12, 0.0))
    measured = [(e, base) for e in (60e-12, 100e-12, 140e-12)]
    fit = fit_gawbs_coefficient(measured, theta_for, g_max=2e5)
    # jitter can only move |theta| down, so the best fit hugs zero
    assert fit.coefficient < 0.02 * 2e5


def test_gawbs_fit_needs_three_points(squeezed):
    with pytest.raises(ParameterError):
        fit_gawbs_coefficient([(1e-12, 1.0)], lambda e, g: 0.0)


def test_stokes_samples_grid_mismatch(spec, grid):
    other = make_grid(512, 10e-12)
    a = init_coherent_sech(spec, grid)
    b = init_coherent_sech(spec, other)
    with pytest.raises(ParameterError):
        stokes_samples([a, b])


def test_circular_state_dark_plane_means(squeezed):
    """Mean s1, s2 stay far below mean s0 for the circular squeezed state."""
    samples, _ = squeezed
    s0_mean = float(np.mean(samples.s0))
    assert abs(np.mean(samples.s1)) <= 0.01 * s0_mean
    assert abs(np.mean(samples.s2)) <= 0.01 * s0_mean
    assert np.all(samples.s0 >= 0.0)
    # the mean points along +S3 (circular polarization)
    assert float(np.mean(samples.s3)) == pytest.approx(s0_mean, rel=1e-3)
