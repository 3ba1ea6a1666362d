"""Run configuration: JSON file with documented unit-suffixed keys.

Every key is optional; defaults reproduce the published experiment.  Units
are carried in the key names (fs, nm, pJ, m, ...).  A config is
schema-validated and consistency-checked before any computation starts.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import jsonschema
import numpy as np

from .errors import ConfigError
from .field import EnsembleConfig, MIN_WINDOW_T0_RATIO
from .grid import make_grid
from .params import DetectionSpec, ExperimentSpec, FiberSpec, PulseSpec
from .propagation import MAX_STEP_PHASE, PropagationModel, Propagator, StepperConfig
from .raman import RamanModel

DEFAULT_ENERGY_RANGE_PJ = (3.5, 178.8)
DEFAULT_ENERGY_POINTS = 12

_number = {"type": "number"}
_bool = {"type": "boolean"}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "fiber": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "length_m": _number,
                "beta2_fs2_per_mm": _number,
                "beta3_fs3_per_mm": _number,
                "n2_m2_per_w": _number,
                "core_diameter_um": _number,
                "attenuation_db_per_km": _number,
                "effective_area_m2": {"type": ["number", "null"]},
            },
        },
        "pulse": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "wavelength_nm": _number,
                "fwhm_fs": _number,
                "energy_pj": _number,
                "shape": {"type": "string", "enum": ["sech"]},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_points": {"type": "integer"},
                "window_ps": _number,
            },
        },
        "raman": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fraction": _number,
                "tau1_fs": _number,
                "tau2_fs": _number,
                "temperature_k": _number,
                "enabled": _bool,
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kerr": _bool,
                "tod": _bool,
                "loss": _bool,
                "input_noise": _bool,
                "raman_noise": _bool,
            },
        },
        "stepper": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_steps": {"type": "integer"},
                "scheme": {"type": "string", "enum": ["strang", "strang4"]},
                "aliasing_guard": _number,
                "batch_size": {"type": "integer"},
            },
        },
        "ensemble": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_trajectories": {"type": "integer"},
                "reference_trajectories": {"type": "integer"},
            },
        },
        "detection": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "transmittance": _number,
                "electronic_noise_floor_dbm": {"type": ["number", "null"]},
                "gawbs_coefficient_rad2_per_j": _number,
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "energies_pj": {"type": "array", "items": _number, "minItems": 1},
                "n_energies": {"type": "integer"},
                "output_dir": {"type": "string"},
                "comparison_data": {"type": ["string", "null"]},
            },
        },
        "measurement": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "relative_phase_rad": _number,
                "theta_points": {"type": "integer"},
            },
        },
    },
}


@dataclass
class RunConfig:
    """Fully resolved configuration for a sweep or single run."""

    spec: ExperimentSpec
    n_points: int = 4096
    window: float = 10e-12
    raman: RamanModel = field(default_factory=RamanModel)
    model_kerr: bool = True
    model_tod: bool = True
    model_loss: bool = False
    model_input_noise: bool = True
    model_raman_noise: bool = True
    n_steps: int = 1000
    scheme: str = "strang"
    aliasing_guard: float = 1e-6
    batch_size: int = 128
    n_trajectories: int = 500
    reference_trajectories: int = 10000
    energies: tuple = ()
    output_dir: str = "out"
    comparison_data: str | None = None
    relative_phase: float = math.pi / 2.0
    theta_points: int = 720

    @property
    def model(self) -> PropagationModel:
        return PropagationModel(
            kerr_enabled=self.model_kerr,
            raman=self.raman,
            tod_enabled=self.model_tod,
            loss_enabled=self.model_loss,
            input_noise_enabled=self.model_input_noise,
            raman_noise_enabled=self.model_raman_noise,
        )

    @property
    def stepper(self) -> StepperConfig:
        return StepperConfig(
            n_steps=self.n_steps,
            scheme=self.scheme,
            aliasing_guard=self.aliasing_guard,
            batch_size=self.batch_size,
        )

    def ensemble(self, master_seed: int) -> EnsembleConfig:
        return EnsembleConfig(
            n_trajectories=self.n_trajectories,
            master_seed=master_seed,
            noise_enabled=self.model_input_noise,
        )

    def resolved_dict(self) -> dict:
        """Flat JSON-ready view of everything that defines the run."""
        d = {
            "fiber": asdict(self.spec.fiber),
            "pulse": asdict(self.spec.pulse),
            "detection": asdict(self.spec.detection),
            "raman": asdict(self.raman),
            "grid": {"n_points": self.n_points, "window_s": self.window},
            "model": {
                "kerr": self.model_kerr,
                "tod": self.model_tod,
                "loss": self.model_loss,
                "input_noise": self.model_input_noise,
                "raman_noise": self.model_raman_noise,
            },
            "stepper": {
                "n_steps": self.n_steps,
                "scheme": self.scheme,
                "aliasing_guard": self.aliasing_guard,
                "batch_size": self.batch_size,
            },
            "ensemble": {
                "n_trajectories": self.n_trajectories,
                "reference_trajectories": self.reference_trajectories,
            },
            "energies_j": list(self.energies),
            "measurement": {
                "relative_phase_rad": self.relative_phase,
                "theta_points": self.theta_points,
            },
            "output_dir": self.output_dir,
            "comparison_data": self.comparison_data,
        }
        return d


def default_energies() -> tuple:
    lo, hi = DEFAULT_ENERGY_RANGE_PJ
    return tuple(float(e) * 1e-12
                 for e in np.geomspace(lo, hi, DEFAULT_ENERGY_POINTS))


def load_config(path: str | None = None,
                overrides: dict[str, Any] | None = None) -> RunConfig:
    """Read, validate, and resolve a JSON config (all keys optional)."""
    raw: dict[str, Any] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    return build_config(raw, overrides or {})


def build_config(raw: dict[str, Any], overrides: dict[str, Any] | None = None) -> RunConfig:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from exc

    def sect(name):
        return dict(raw.get(name, {}))

    fib = sect("fiber")
    pul = sect("pulse")
    gri = sect("grid")
    ram = sect("raman")
    mod = sect("model")
    ste = sect("stepper")
    ens = sect("ensemble")
    det = sect("detection")
    swp = sect("sweep")
    mea = sect("measurement")
    for key, val in (overrides or {}).items():
        section, _, leaf = key.partition(".")
        target = {"fiber": fib, "pulse": pul, "grid": gri, "raman": ram,
                  "model": mod, "stepper": ste, "ensemble": ens,
                  "detection": det, "sweep": swp, "measurement": mea}.get(section)
        if target is None:
            raise ConfigError(f"unknown override section {section!r}")
        target[leaf] = val

    try:
        fiber = FiberSpec(
            length=fib.get("length_m", 13.2),
            beta2=fib.get("beta2_fs2_per_mm", -11.1) * 1e-27,
            beta3=fib.get("beta3_fs3_per_mm", 83.8) * 1e-42,
            n2=fib.get("n2_m2_per_w", 2.9e-20),
            core_diameter=fib.get("core_diameter_um", 5.7) * 1e-6,
            attenuation_db_km=fib.get("attenuation_db_per_km", 2.03),
            effective_area_override=fib.get("effective_area_m2"),
        )
        pulse = PulseSpec(
            center_wavelength=pul.get("wavelength_nm", 1499.5) * 1e-9,
            fwhm_duration=pul.get("fwhm_fs", 140.0) * 1e-15,
            total_energy=pul.get("energy_pj", 117.4) * 1e-12,
            shape=pul.get("shape", "sech"),
        )
        detection = DetectionSpec(
            total_transmittance=det.get("transmittance", 1.0),
            electronic_noise_floor_dbm=det.get("electronic_noise_floor_dbm"),
            gawbs_coefficient=det.get("gawbs_coefficient_rad2_per_j", 0.0),
        )
        raman = RamanModel(
            fraction=ram.get("fraction", 0.15),
            tau1=ram.get("tau1_fs", 12.2) * 1e-15,
            tau2=ram.get("tau2_fs", 32.0) * 1e-15,
            temperature=ram.get("temperature_k", 300.0),
            enabled=ram.get("enabled", True),
        )
        if "energies_pj" in swp:
            energies = tuple(float(e) * 1e-12 for e in swp["energies_pj"])
        elif "n_energies" in swp:
            lo, hi = DEFAULT_ENERGY_RANGE_PJ
            energies = tuple(float(e) * 1e-12
                             for e in np.geomspace(lo, hi, int(swp["n_energies"])))
        else:
            energies = default_energies()
        cfg = RunConfig(
            spec=ExperimentSpec(fiber=fiber, pulse=pulse, detection=detection),
            n_points=gri.get("n_points", 4096),
            window=gri.get("window_ps", 10.0) * 1e-12,
            raman=raman,
            model_kerr=mod.get("kerr", True),
            model_tod=mod.get("tod", True),
            model_loss=mod.get("loss", False),
            model_input_noise=mod.get("input_noise", True),
            model_raman_noise=mod.get("raman_noise", True),
            n_steps=ste.get("n_steps", 1000),
            scheme=ste.get("scheme", "strang"),
            aliasing_guard=ste.get("aliasing_guard", 1e-6),
            batch_size=ste.get("batch_size", 128),
            n_trajectories=ens.get("n_trajectories", 500),
            reference_trajectories=ens.get("reference_trajectories", 10000),
            energies=energies,
            output_dir=swp.get("output_dir", "out"),
            comparison_data=swp.get("comparison_data"),
            relative_phase=mea.get("relative_phase_rad", math.pi / 2.0),
            theta_points=mea.get("theta_points", 720),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    """Consistency checks beyond the schema; raises ConfigError."""
    try:
        grid = make_grid(cfg.n_points, cfg.window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    t0 = cfg.spec.pulse.t0
    if cfg.window < MIN_WINDOW_T0_RATIO * t0:
        raise ConfigError(
            f"window {cfg.window:.3e} s < {MIN_WINDOW_T0_RATIO} t0 "
            f"({MIN_WINDOW_T0_RATIO * t0:.3e} s)"
        )
    if any(e < 0 for e in cfg.energies):
        raise ConfigError("energies must be >= 0")
    if not cfg.energies:
        raise ConfigError("energy list must not be empty")

    # per-step nonlinear phase bound at the largest energy the sweep will run
    e_max = max(cfg.energies)
    try:
        Propagator(cfg.spec.with_energy(e_max), grid, cfg.model, cfg.stepper)
    except ValueError as exc:
        raise ConfigError(f"stepper validation failed: {exc}") from exc
    _ = MAX_STEP_PHASE  # bound lives in propagation; referenced for docs
