"""Uniform time grid and the spectral transform conventions.

Analysis (time -> frequency) uses the e^{+i omega t} kernel, so a positive
bin frequency is a positive offset from the optical carrier.  With numpy's
FFT sign convention that makes ``np.fft.ifft`` the analysis direction and
``np.fft.fft`` the synthesis direction.  Consequences that tests pin down:

* a linear factor exp(i (beta2/2) w^2 dz + i (beta3/6) w^3 dz) applied to
  analysis coefficients delays the pulse for beta3 > 0,
* the spectral mean frequency drops when Raman scattering is active.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TimeGrid:
    n_points: int
    window: float
    dt: float
    times: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)   # rad/s, zero frequency at bin 0

    @property
    def omega_nyquist(self) -> float:
        return np.pi / self.dt


def make_grid(n_points: int, window: float) -> TimeGrid:
    """Build a centered grid of n_points (power of two, >= 64) over window seconds."""
    if not isinstance(n_points, (int, np.integer)) or not _is_power_of_two(int(n_points)):
        raise GridError(f"n_points must be a power of two, got {n_points!r}")
    if n_points < 64:
        raise GridError(f"n_points must be >= 64, got {n_points}")
    if window <= 0:
        raise GridError(f"window must be positive, got {window}")
    n = int(n_points)
    dt = window / n
    times = (np.arange(n) - n // 2) * dt
    omega = 2.0 * np.pi * np.fft.fftfreq(n, dt)
    return TimeGrid(n_points=n, window=float(window), dt=dt, times=times, omega=omega)


def to_freq(u: np.ndarray) -> np.ndarray:
    """Analysis transform: coefficients of e^{-i omega t} synthesis basis."""
    return np.fft.ifft(u, axis=-1)


def to_time(c: np.ndarray) -> np.ndarray:
    """Synthesis transform, exact inverse of :func:`to_freq`."""
    return np.fft.fft(c, axis=-1)


def photon_number(u: np.ndarray, grid: TimeGrid) -> float | np.ndarray:
    """Sum |u|^2 dt over the last axis (photons, flux-unit envelopes)."""
    return (u.real**2 + u.imag**2).sum(axis=-1) * grid.dt


def spectral_photon_number(u: np.ndarray, grid: TimeGrid) -> float | np.ndarray:
    """Photon number computed from the spectrum (Parseval route)."""
    c = to_freq(u)
    return (c.real**2 + c.imag**2).sum(axis=-1) * grid.n_points * grid.dt


def mean_frequency(u: np.ndarray, grid: TimeGrid) -> float:
    """Intensity-weighted mean angular frequency offset of the spectrum."""
    c = to_freq(u)
    w = np.abs(c) ** 2
    return float((grid.omega * w).sum() / w.sum())
