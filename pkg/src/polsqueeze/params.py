"""Experiment parameters and derived soliton scales.

All quantities are SI. Pulse energies always denote the TOTAL over both
polarization modes; each mode carries exactly half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .constants import PLANCK, SPEED_OF_LIGHT
from .errors import ParameterError

# sech amplitude half-width t0 = FWHM / (2 ln(1 + sqrt 2))
SECH_FWHM_FACTOR = 2.0 * math.log(1.0 + math.sqrt(2.0))


def effective_area(core_diameter: float) -> float:
    """Geometric core area pi (d/2)^2 used as the default mode area."""
    if core_diameter <= 0:
        raise ParameterError(f"core diameter must be positive, got {core_diameter}")
    return math.pi * (core_diameter / 2.0) ** 2


@dataclass(frozen=True)
class FiberSpec:
    """Fiber constants. beta2/beta3 in s^2/m and s^3/m, attenuation in dB/km."""

    length: float = 13.2
    beta2: float = -11.1e-27
    beta3: float = 83.8e-42
    n2: float = 2.9e-20
    core_diameter: float = 5.7e-6
    attenuation_db_km: float = 2.03
    effective_area_override: float | None = None

    def __post_init__(self):
        if self.length <= 0:
            raise ParameterError(f"fiber length must be positive, got {self.length}")
        if self.attenuation_db_km < 0:
            raise ParameterError("attenuation must be >= 0")
        if self.effective_area <= 0:
            raise ParameterError("effective area must be positive")

    @property
    def effective_area(self) -> float:
        if self.effective_area_override is not None:
            return self.effective_area_override
        return effective_area(self.core_diameter)

    @property
    def alpha_per_m(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.attenuation_db_km * math.log(10.0) / 10.0 / 1000.0


@dataclass(frozen=True)
class PulseSpec:
    """Input pulse. total_energy is summed over both polarizations (J)."""

    center_wavelength: float = 1499.5e-9
    fwhm_duration: float = 140e-15
    total_energy: float = 117.4e-12
    shape: str = "sech"

    def __post_init__(self):
        if self.shape != "sech":
            raise ParameterError(f"unsupported pulse shape {self.shape!r}")
        if self.fwhm_duration <= 0:
            raise ParameterError("fwhm_duration must be positive")
        if self.total_energy < 0:
            raise ParameterError("total_energy must be >= 0")
        if self.center_wavelength <= 0:
            raise ParameterError("center_wavelength must be positive")

    @property
    def t0(self) -> float:
        """Sech width parameter, FWHM / 1.7627..."""
        return self.fwhm_duration / SECH_FWHM_FACTOR

    @property
    def photon_energy(self) -> float:
        return PLANCK * SPEED_OF_LIGHT / self.center_wavelength

    @property
    def carrier_omega(self) -> float:
        return 2.0 * math.pi * SPEED_OF_LIGHT / self.center_wavelength


@dataclass(frozen=True)
class DetectionSpec:
    """Detection-side model: lumped transmittance and excess phase noise."""

    total_transmittance: float = 1.0
    electronic_noise_floor_dbm: float | None = None
    gawbs_coefficient: float = 0.0   # rad^2 / J of per-polarization pulse energy

    def __post_init__(self):
        if not (0.0 < self.total_transmittance <= 1.0):
            raise ParameterError(
                f"transmittance must be in (0, 1], got {self.total_transmittance}"
            )
        if self.gawbs_coefficient < 0:
            raise ParameterError("gawbs_coefficient must be >= 0")


def nonlinear_coefficient(fiber: FiberSpec, wavelength: float) -> float:
    """Kerr coefficient gamma = 2 pi n2 / (lambda A_eff) in 1/(W m)."""
    if wavelength <= 0:
        raise ParameterError("wavelength must be positive")
    if fiber.n2 < 0:
        raise ParameterError("n2 must be >= 0")
    return 2.0 * math.pi * fiber.n2 / (wavelength * fiber.effective_area)


@dataclass(frozen=True)
class DerivedScales:
    """Per-run derived quantities. Soliton fields are None when beta2 >= 0."""

    gamma: float                       # 1/(W m)
    gamma_flux: float                  # phase rate per unit photon flux, s/m
    t0: float                          # s
    peak_power: float                  # W per polarization
    photon_energy: float               # J
    photons_per_pulse: float           # per polarization
    soliton_order: float | None
    soliton_energy_per_pol: float | None

    @property
    def soliton_defined(self) -> bool:
        return self.soliton_order is not None


def derive_scales(fiber: FiberSpec, pulse: PulseSpec) -> DerivedScales:
    """Compute nonlinear and soliton scales for a fiber/pulse pair.

    Each polarization carries half the total energy; for a sech pulse the
    per-polarization peak power is (E/2) / (2 t0).
    """
    gamma = nonlinear_coefficient(fiber, pulse.center_wavelength)
    t0 = pulse.t0
    e_pol = pulse.total_energy / 2.0
    peak_power = e_pol / (2.0 * t0)
    photon_energy = pulse.photon_energy
    gamma_flux = gamma * photon_energy

    if fiber.beta2 < 0:
        if gamma > 0:
            order = math.sqrt(gamma * peak_power * t0**2 / abs(fiber.beta2))
            e_sol = 2.0 * abs(fiber.beta2) / (gamma * t0)
        else:
            order, e_sol = 0.0, None
    else:
        order, e_sol = None, None

    return DerivedScales(
        gamma=gamma,
        gamma_flux=gamma_flux,
        t0=t0,
        peak_power=peak_power,
        photon_energy=photon_energy,
        photons_per_pulse=e_pol / photon_energy,
        soliton_order=order,
        soliton_energy_per_pol=e_sol,
    )


def energy_from_scales(scales: DerivedScales) -> float:
    """Total pulse energy reconstructed from derived quantities (round trip)."""
    return 2.0 * scales.peak_power * 2.0 * scales.t0


@dataclass(frozen=True)
class ExperimentSpec:
    """Complete physical description of one run."""

    fiber: FiberSpec = field(default_factory=FiberSpec)
    pulse: PulseSpec = field(default_factory=PulseSpec)
    detection: DetectionSpec = field(default_factory=DetectionSpec)

    @property
    def scales(self) -> DerivedScales:
        return derive_scales(self.fiber, self.pulse)

    def with_energy(self, total_energy: float) -> "ExperimentSpec":
        return replace(self, pulse=replace(self.pulse, total_energy=total_energy))
