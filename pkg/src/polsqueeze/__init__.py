"""Polarization-squeezing simulator for ultrashort pulses in a Kerr fiber.

Truncated-Wigner Monte Carlo propagation of two independently squeezed
polarization modes through a birefringent fiber (dispersion to third order,
Kerr with delayed Raman response, thermal Raman phase noise), followed by a
virtual Stokes measurement that normalizes dark-plane variances to an
operationally defined shot-noise level.
"""

__version__ = "0.1.0"

from .errors import (
    CalibrationError,
    ConfigError,
    EnsembleError,
    GridError,
    ParameterError,
    TrajectoryAbort,
    TruncationError,
)
from .field import EnsembleConfig, FieldState, add_vacuum_noise, init_coherent_sech, trajectory_rng
from .grid import TimeGrid, make_grid
from .kerr_oracle import fock_kerr_variance, twa_kerr_variance
from .params import (
    DerivedScales,
    DetectionSpec,
    ExperimentSpec,
    FiberSpec,
    PulseSpec,
    derive_scales,
    effective_area,
    energy_from_scales,
    nonlinear_coefficient,
)
from .polarimetry import (
    SqueezingResult,
    StokesSampleSet,
    apply_gawbs,
    apply_lumped_loss,
    dark_plane_variance,
    extract_squeezing,
    fit_gawbs_coefficient,
    infer_lossless,
    shot_noise_reference,
    stokes_samples,
)
from .propagation import (
    PropagationModel,
    Propagator,
    StepperConfig,
    propagate,
    propagate_ensemble,
)
from .raman import RamanModel, raman_noise_sample, response_kernel, thermal_occupation
from .sweep import (
    MeasuredPoint,
    RunManifest,
    compare_to_measurement,
    correct_electronic_noise,
    run_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
