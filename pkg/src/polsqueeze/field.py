"""Two-polarization envelope state, coherent input, and vacuum noise.

Envelopes are stored in photon-flux units: sum(|u|^2) dt is a photon
number.  Conversion to watts happens only through the parameter module
(photon energy), never here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, TruncationError
from .grid import TimeGrid, photon_number
from .params import ExperimentSpec

# Minimum window-to-t0 ratio for a sech pulse; below this the tail truncation
# exceeds the 0.1% photon-number budget.
MIN_WINDOW_T0_RATIO = 16.0

# Separates reference-ensemble Philox streams from signal-ensemble streams.
REFERENCE_STREAM_SALT = 0x9E3779B97F4A7C15


@dataclass
class FieldState:
    """Complex envelopes of both polarization modes on a shared grid."""

    grid: TimeGrid
    pol_x: np.ndarray
    pol_y: np.ndarray

    def __post_init__(self):
        n = self.grid.n_points
        if self.pol_x.shape[-1] != n or self.pol_y.shape[-1] != n:
            raise ParameterError("polarization arrays must match the grid length")

    def photon_numbers(self) -> tuple[float, float]:
        return (
            float(photon_number(self.pol_x, self.grid)),
            float(photon_number(self.pol_y, self.grid)),
        )

    def copy(self) -> "FieldState":
        return FieldState(self.grid, self.pol_x.copy(), self.pol_y.copy())


@dataclass(frozen=True)
class EnsembleConfig:
    """Monte Carlo ensemble size and seeding."""

    n_trajectories: int = 500
    master_seed: int = 0
    noise_enabled: bool = True

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ParameterError("n_trajectories must be >= 1")


def trajectory_rng(master_seed: int, trajectory_index: int) -> np.random.Generator:
    """Counter-based stream depending only on (master_seed, trajectory_index).

    Philox keyed by the pair gives identical draws for a trajectory no matter
    how the ensemble is chunked or parallelized.
    """
    key = np.array(
        [np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF),
         np.uint64(trajectory_index & 0xFFFFFFFFFFFFFFFF)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def _sech(x: np.ndarray) -> np.ndarray:
    # overflow-safe 1/cosh
    ax = np.abs(x)
    e = np.exp(-ax)
    return 2.0 * e / (1.0 + e * e)


def init_coherent_sech(spec: ExperimentSpec, grid: TimeGrid) -> FieldState:
    """Mean-field input: equal sech pulses on both polarizations, zero phase.

    The pi/2 Stokes phase between the modes is applied at measurement time,
    not here.  Total photon number equals E_total / (h c / lambda0) up to
    grid truncation (< 0.1% for window >= 16 t0).
    """
    scales = spec.scales
    if grid.window < MIN_WINDOW_T0_RATIO * scales.t0:
        raise TruncationError(
            f"window {grid.window:.3e} s too small for t0 {scales.t0:.3e} s "
            f"(need >= {MIN_WINDOW_T0_RATIO} t0)"
        )
    peak_flux = scales.peak_power / scales.photon_energy
    envelope = math.sqrt(peak_flux) * _sech(grid.times / scales.t0)
    u = envelope.astype(np.complex128)
    return FieldState(grid=grid, pol_x=u, pol_y=u.copy())


def vacuum_noise_sigma(grid: TimeGrid) -> float:
    """Per-bin standard deviation of each noise quadrature, flux units."""
    return math.sqrt(1.0 / (4.0 * grid.dt))


def draw_vacuum_noise(grid: TimeGrid, rng: np.random.Generator) -> np.ndarray:
    """One polarization's worth of complex vacuum noise (half photon per mode).

    Consumes exactly 2 n draws: the first n are the real quadratures, the
    second n the imaginary ones.  The draw layout is part of the
    reproducibility contract.
    """
    n = grid.n_points
    a = rng.standard_normal(2 * n)
    return (a[:n] + 1j * a[n:]) * vacuum_noise_sigma(grid)


def add_vacuum_noise(state: FieldState, rng: np.random.Generator,
                     noise_enabled: bool = True) -> FieldState:
    """Add independent symmetric-ordering vacuum noise to both polarizations.

    x draws come first, then y; the two modes are uncorrelated.
    """
    if not noise_enabled:
        return state
    nx = draw_vacuum_noise(state.grid, rng)
    ny = draw_vacuum_noise(state.grid, rng)
    return FieldState(state.grid, state.pol_x + nx, state.pol_y + ny)


def write_field_csv(state: FieldState, path) -> None:
    """Dump (t, Re ux, Im ux, Re uy, Im uy) rows for debugging."""
    data = np.column_stack(
        [state.grid.times,
         state.pol_x.real, state.pol_x.imag,
         state.pol_y.real, state.pol_y.imag]
    )
    np.savetxt(
        path, data, delimiter=",",
        header="t_s,re_ux,im_ux,re_uy,im_uy", comments="",
    )
