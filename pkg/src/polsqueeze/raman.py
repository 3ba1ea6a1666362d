"""Delayed Raman response, thermal phonon occupation, and phase-noise sampling.

The response is the single-damped-oscillator silica model

    h(t) = ((tau1^2 + tau2^2) / (tau1 tau2^2)) exp(-t/tau2) sin(t/tau1),  t >= 0,

normalized on the grid so that sum(h) dt = 1.  Its transform h~(omega) is
taken with the e^{+i omega t} kernel of :mod:`polsqueeze.grid`; in that
convention Im h~ > 0 for omega > 0, and the companion propagation test pins
the physical direction (pulse spectra migrate toward lower frequencies).

In-fiber thermal noise enters as a real multiplicative phase field per step.
Its two-sided spectral density per unit fiber length is

    S(omega) = 2 gamma_flux f_R |Im h~(omega)| (n_th(|omega|) + 1/2),

so a step of length dz carries a phase increment with spectrum S(omega) dz.
The gamma_flux factor is the Kerr coupling in flux units and is supplied by
the caller; the half-photon term keeps spontaneous scattering at T = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import BOLTZMANN, HBAR
from .errors import ParameterError, TruncationError
from .grid import TimeGrid

# Noise filter support: drop spectral bins below this fraction of the peak
# density (keeps the per-step Gaussian draw count small).
NOISE_SUPPORT_CUTOFF = 1e-10


@dataclass(frozen=True)
class RamanModel:
    """Raman fraction, oscillator times, and phonon bath temperature."""

    fraction: float = 0.15
    tau1: float = 12.2e-15
    tau2: float = 32e-15
    temperature: float = 300.0
    enabled: bool = True

    def __post_init__(self):
        if not (0.0 <= self.fraction < 1.0):
            raise ParameterError(f"Raman fraction must be in [0, 1), got {self.fraction}")
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ParameterError("tau1 and tau2 must be positive")
        if self.temperature < 0:
            raise ParameterError("temperature must be >= 0")


def response_kernel(model: RamanModel, grid: TimeGrid) -> np.ndarray:
    """Discretized causal response on lag bins 0..n-1, normalized to unit area.

    Lags at and beyond window/2 alias to negative times under circular
    convolution, so they are zeroed explicitly; causality means exactly these
    entries vanish.
    """
    if grid.window < 10.0 * model.tau2:
        raise TruncationError(
            f"grid window {grid.window:.3e} s cannot hold the Raman kernel "
            f"(need >= 10 tau2 = {10 * model.tau2:.3e} s)"
        )
    lag = np.arange(grid.n_points) * grid.dt
    amp = (model.tau1**2 + model.tau2**2) / (model.tau1 * model.tau2**2)
    h = amp * np.exp(-lag / model.tau2) * np.sin(lag / model.tau1)
    h[lag >= grid.window / 2.0] = 0.0
    h /= h.sum() * grid.dt
    return h


def response_transfer(model: RamanModel, grid: TimeGrid) -> np.ndarray:
    """h~ on the rfft bins (e^{+i omega t} convention), h~(0) = 1."""
    h = response_kernel(model, grid)
    return np.conj(np.fft.rfft(h)) * grid.dt


def convolution_multiplier(model: RamanModel, grid: TimeGrid) -> np.ndarray:
    """rfft-domain multiplier M with irfft(M * rfft(I)) = (h * I)(t) dt-exact."""
    h = response_kernel(model, grid)
    return np.fft.rfft(h) * grid.dt


def thermal_occupation(omega: float | np.ndarray, temperature: float):
    """Bose occupation 1/(exp(hbar|w|/kT) - 1); zero at T = 0."""
    w = np.abs(np.asarray(omega, dtype=float))
    if np.any(w == 0.0):
        raise ParameterError("thermal occupation diverges at omega = 0")
    if temperature == 0.0:
        out = np.zeros_like(w)
        return float(out) if out.ndim == 0 else out
    out = 1.0 / np.expm1(HBAR * w / (BOLTZMANN * temperature))
    return float(out) if out.ndim == 0 else out


def noise_spectral_density(model: RamanModel, grid: TimeGrid,
                           gamma_flux: float = 1.0) -> np.ndarray:
    """Per-unit-length phase-noise spectrum S(omega) on the rfft bins.

    The omega = 0 bin uses the analytic limit Im h~(w) (n_th(w)+1/2) ->
    (d Im h~/dw)(0) k_B T / hbar, which is finite and smooth.
    """
    wr = 2.0 * np.pi * np.fft.rfftfreq(grid.n_points, grid.dt)
    imh = np.abs(np.imag(response_transfer(model, grid)))
    weight = np.empty_like(wr)
    weight[1:] = thermal_occupation(wr[1:], model.temperature) + 0.5
    s = 2.0 * gamma_flux * model.fraction * imh * weight
    slope = imh[1] / wr[1]
    s[0] = 2.0 * gamma_flux * model.fraction * slope * BOLTZMANN * model.temperature / HBAR
    if np.any(s < 0):
        # the closed form is non-negative; guard against numerical surprises
        import logging
        logging.getLogger(__name__).warning("clipped negative Raman noise density")
        s = np.clip(s, 0.0, None)
    return s


@dataclass(frozen=True)
class RamanNoiseSampler:
    """Precomputed spectral filter turning unit normals into phase fields.

    ``filter_active`` spans the first ``n_active`` rfft bins; each sample
    consumes exactly 2 * n_active standard normals per polarization per step.
    """

    n_points: int
    n_active: int
    filter_active: np.ndarray

    @property
    def draws_per_sample(self) -> int:
        return 2 * self.n_active

    def sample(self, normals: np.ndarray) -> np.ndarray:
        """Map (..., 2 n_active) standard normals to real phase fields (..., n).

        Even-index draws feed the real spectral quadrature, odd the
        imaginary; the zero-frequency bin keeps only its real part (factor
        sqrt 2 restores its variance).
        """
        k = self.n_active
        if normals.shape[-1] != 2 * k:
            raise ParameterError("wrong number of normals for this sampler")
        g = np.zeros(normals.shape[:-1] + (self.n_points // 2 + 1,), dtype=np.complex128)
        g[..., :k] = (normals[..., 0::2] + 1j * normals[..., 1::2]) * np.sqrt(0.5)
        g[..., 0] = np.sqrt(2.0) * g[..., 0].real
        g[..., :k] *= self.filter_active
        return np.fft.irfft(g, self.n_points, axis=-1)


def make_noise_sampler(model: RamanModel, grid: TimeGrid, gamma_flux: float,
                       dz: float) -> RamanNoiseSampler:
    """Build the per-step sampler for a given step length dz."""
    s = noise_spectral_density(model, grid, gamma_flux) * dz
    filt = np.sqrt(grid.n_points * s / grid.dt)
    peak = filt.max()
    if peak == 0.0:
        n_active = 1
    else:
        above = np.nonzero(filt > NOISE_SUPPORT_CUTOFF * peak)[0]
        n_active = int(above[-1]) + 1 if above.size else 1
    return RamanNoiseSampler(
        n_points=grid.n_points,
        n_active=n_active,
        filter_active=filt[:n_active].copy(),
    )


def raman_noise_sample(model: RamanModel, grid: TimeGrid, dz: float,
                       rng: np.random.Generator,
                       gamma_flux: float = 1.0) -> np.ndarray:
    """One step's real phase-noise field theta(t) (radians).

    Returns zeros when the model is disabled.  The spectrum of the returned
    field is S(omega) dz with S from :func:`noise_spectral_density`.
    """
    if not model.enabled or model.fraction == 0.0 or gamma_flux == 0.0:
        return np.zeros(grid.n_points)
    sampler = make_noise_sampler(model, grid, gamma_flux, dz)
    return sampler.sample(rng.standard_normal(sampler.draws_per_sample))


def write_kernel_csv(model: RamanModel, grid: TimeGrid, path) -> None:
    """Two-column dump (lag_s, response_per_s) of the discretized kernel."""
    h = response_kernel(model, grid)
    lag = np.arange(grid.n_points) * grid.dt
    np.savetxt(path, np.column_stack([lag, h]), delimiter=",",
               header="lag_s,response_per_s", comments="")


def write_noise_spectrum_csv(model: RamanModel, grid: TimeGrid, path,
                             gamma_flux: float = 1.0) -> None:
    """Two-column dump (omega_rad_s, density) of the per-length noise spectrum."""
    s = noise_spectral_density(model, grid, gamma_flux)
    wr = 2.0 * np.pi * np.fft.rfftfreq(grid.n_points, grid.dt)
    np.savetxt(path, np.column_stack([wr, s]), delimiter=",",
               header="omega_rad_per_s,phase_noise_density", comments="")
