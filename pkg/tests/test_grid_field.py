"""Grid transforms, coherent input, vacuum noise statistics, RNG contract."""

import numpy as np
import pytest

from polsqueeze import ExperimentSpec, PulseSpec, make_grid, trajectory_rng
from polsqueeze.errors import GridError, TruncationError
from polsqueeze.field import (
    add_vacuum_noise,
    draw_vacuum_noise,
    init_coherent_sech,
    write_field_csv,
)
from polsqueeze.grid import (
    mean_frequency,
    photon_number,
    spectral_photon_number,
    to_freq,
    to_time,
)


@pytest.fixture(scope="module")
def grid():
    return make_grid(4096, 10e-12)


@pytest.fixture(scope="module")
def spec():
    return ExperimentSpec()


def test_grid_dt(grid):
    assert grid.dt == pytest.approx(10e-12 / 4096, rel=1e-15)
    assert grid.dt == pytest.approx(2.4414e-15, rel=1e-4)


def test_grid_rejects_non_power_of_two():
    with pytest.raises(GridError):
        make_grid(100, 10e-12)
    with pytest.raises(GridError):
        make_grid(32, 10e-12)
    with pytest.raises(GridError):
        make_grid(4096, -1.0)


def test_grid_centered(grid):
    assert grid.times[grid.n_points // 2] == 0.0
    assert grid.omega[0] == 0.0


def test_transform_round_trip(grid):
    rng = np.random.default_rng(0)
    u = rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points)
    err = np.linalg.norm(to_time(to_freq(u)) - u) / np.linalg.norm(u)
    assert err < 1e-12


def test_parseval(grid):
    rng = np.random.default_rng(1)
    u = rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points)
    nt = photon_number(u, grid)
    nf = spectral_photon_number(u, grid)
    assert abs(nt - nf) / nt < 1e-10


def test_coherent_sech_photon_number(grid, spec):
    spec_paper = ExperimentSpec(pulse=PulseSpec(total_energy=117.4e-12))
    state = init_coherent_sech(spec_paper, grid)
    expected = spec_paper.pulse.total_energy / 2 / spec_paper.pulse.photon_energy
    nx, ny = state.photon_numbers()
    assert nx == pytest.approx(expected, rel=1e-3)
    assert ny == pytest.approx(expected, rel=1e-3)
    # vicinity of the quoted soliton photon number
    assert nx == pytest.approx(4.43e8, rel=0.01)


def test_coherent_sech_zero_energy(grid):
    state = init_coherent_sech(ExperimentSpec().with_energy(0.0), grid)
    assert np.all(state.pol_x == 0.0)


def test_coherent_sech_energy_scaling(grid, spec):
    n1 = init_coherent_sech(spec.with_energy(50e-12), grid).photon_numbers()[0]
    n2 = init_coherent_sech(spec.with_energy(100e-12), grid).photon_numbers()[0]
    assert n2 == pytest.approx(2.0 * n1, rel=1e-12)


def test_coherent_sech_window_guard(spec):
    small = make_grid(64, 1.0e-12)   # 1 ps < 16 t0 = 1.27 ps
    with pytest.raises(TruncationError):
        init_coherent_sech(spec, small)


def test_vacuum_noise_statistics(grid, spec):
    """Per-bin noise quadrature variance is 1/(4 dt) and the mean vanishes."""
    n_tr = 12000
    n_probe = 64
    rng = np.random.default_rng(7)
    re = np.empty((n_tr, n_probe))
    im = np.empty((n_tr, n_probe))
    for i in range(n_tr):
        z = draw_vacuum_noise(grid, rng)[:n_probe]
        re[i] = z.real
        im[i] = z.imag
    target = 1.0 / (4.0 * grid.dt)
    var_re = re.var(axis=0).mean()
    var_im = im.var(axis=0).mean()
    # 4 sigma of the pooled variance estimator
    tol = 4.0 * target * np.sqrt(2.0 / (n_tr * n_probe - 1))
    assert abs(var_re - target) < tol
    assert abs(var_im - target) < tol
    mean_scale = np.sqrt(target / n_tr)
    assert abs(re.mean()) < 5.0 * mean_scale / np.sqrt(n_probe)


def test_vacuum_noise_photon_excess(grid, spec):
    """Ordering contribution: n_points/2 photons per polarization on average."""
    state = init_coherent_sech(spec.with_energy(0.0), grid)
    n_tr = 4000
    tot = 0.0
    for i in range(n_tr):
        noisy = add_vacuum_noise(state, trajectory_rng(3, i))
        tot += photon_number(noisy.pol_x, grid)
    mean = tot / n_tr
    expect = grid.n_points / 2.0
    sigma = expect * np.sqrt(2.0 / (n_tr * grid.n_points))
    assert abs(mean - expect) < 5.0 * sigma


def test_vacuum_noise_disabled_is_identity(grid, spec):
    state = init_coherent_sech(spec, grid)
    same = add_vacuum_noise(state, trajectory_rng(0, 0), noise_enabled=False)
    assert same is state


def test_trajectory_rng_deterministic():
    a = trajectory_rng(1234, 7).standard_normal(64)
    b = trajectory_rng(1234, 7).standard_normal(64)
    assert np.array_equal(a, b)


def test_trajectory_rng_streams_differ():
    a = trajectory_rng(1234, 0).standard_normal(20000)
    b = trajectory_rng(1234, 1).standard_normal(20000)
    assert not np.array_equal(a, b)
    # independence smoke test: correlation within 5 sigma of zero
    corr = np.mean(a * b)
    assert abs(corr) < 5.0 / np.sqrt(len(a))


def test_mean_frequency_of_chirp_free_pulse(grid, spec):
    state = init_coherent_sech(spec, grid)
    assert abs(mean_frequency(state.pol_x, grid)) < 1e-3 * 2 * np.pi / grid.window


def test_field_csv_dump(tmp_path, grid, spec):
    state = init_coherent_sech(spec, grid)
    path = tmp_path / "field.csv"
    write_field_csv(state, path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (grid.n_points, 5)
    nx = (data[:, 1] ** 2 + data[:, 2] ** 2).sum() * grid.dt
    assert nx == pytest.approx(state.photon_numbers()[0], rel=1e-9)
