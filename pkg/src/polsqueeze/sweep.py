"""Energy sweep orchestration, measured-data comparison, output emission.

Summary rows are appended to summary.csv as soon as each energy finishes,
so an interrupted sweep loses at most the in-flight point.  All emitted
numbers are deterministic functions of (config, master seed); thread count
never changes a byte.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ParameterError
from .field import EnsembleConfig, REFERENCE_STREAM_SALT, trajectory_rng
from .grid import make_grid
from .polarimetry import (
    SqueezingResult,
    StokesSampleSet,
    apply_gawbs,
    apply_lumped_loss,
    extract_squeezing,
    shot_noise_reference,
)
from .propagation import Propagator

SUMMARY_HEADER = "energy_pJ,squeezing_dB,antisqueezing_dB,theta_sq_deg,sampling_err_dB"
GAWBS_STREAM_SALT = 0x5DEECE66D


@dataclass
class SweepRow:
    energy: float                     # J
    result: SqueezingResult | None    # detected (loss/GAWBS applied)
    lossless: SqueezingResult | None  # before detection transmittance
    shot_noise: float
    n_aborted: int
    wall_reference_s: float
    wall_signal_s: float
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def summary_line(self) -> str:
        e_pj = self.energy * 1e12
        if self.failed:
            return f"{e_pj:.1f},failed,failed,failed,failed"
        r = self.result
        return (f"{e_pj:.1f},{r.squeezing_db:.3f},{r.antisqueezing_db:.3f},"
                f"{r.theta_sq_deg:.3f},{r.sampling_error_db:.3f}")


@dataclass
class RunManifest:
    config: dict
    master_seed: int
    threads: int
    code_version: str = __version__
    wall_clock_s: dict = field(default_factory=dict)
    trajectory_aborts: int = 0
    failed_energies: list = field(default_factory=list)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(
                {
                    "code_version": self.code_version,
                    "master_seed": self.master_seed,
                    "threads": self.threads,
                    "config": self.config,
                    "wall_clock_s": self.wall_clock_s,
                    "trajectory_aborts": self.trajectory_aborts,
                    "failed_energies": self.failed_energies,
                },
                f, indent=2, sort_keys=True,
            )
            f.write("\n")


def _vtheta_filename(energy_j: float) -> str:
    return f"vtheta_{energy_j * 1e12:.1f}pJ.csv"


def measure_energy(config: RunConfig, energy: float, master_seed: int,
                   energy_index: int, threads: int = 1) -> SweepRow:
    """Reference run + squeezed run + detection models for one energy."""
    spec = config.spec.with_energy(energy)
    grid = make_grid(config.n_points, config.window)

    t0 = time.perf_counter()
    ref_ensemble = EnsembleConfig(
        n_trajectories=config.reference_trajectories,
        master_seed=master_seed ^ REFERENCE_STREAM_SALT,
        noise_enabled=True,
    )
    snl = shot_noise_reference(spec, grid, ref_ensemble, threads=threads,
                               theta_points=config.theta_points)
    t1 = time.perf_counter()

    prop = Propagator(spec, grid, config.model, config.stepper)
    moments = prop.run_moments(config.ensemble(master_seed), threads=threads)
    samples = StokesSampleSet(
        moments.n_x[moments.kept], moments.n_y[moments.kept],
        moments.cross[moments.kept], config.relative_phase,
    )

    g = spec.detection.gawbs_coefficient
    if g > 0:
        rng = trajectory_rng(master_seed ^ GAWBS_STREAM_SALT, energy_index)
        samples = apply_gawbs(samples, g, energy, rng)

    lossless = extract_squeezing(samples, snl, theta_points=config.theta_points)
    eta = spec.detection.total_transmittance
    detected = apply_lumped_loss(lossless, eta) if eta < 1.0 else lossless
    t2 = time.perf_counter()

    return SweepRow(
        energy=energy,
        result=detected,
        lossless=lossless,
        shot_noise=snl,
        n_aborted=moments.n_aborted,
        wall_reference_s=t1 - t0,
        wall_signal_s=t2 - t1,
    )


def run_sweep(config: RunConfig, master_seed: int, threads: int = 1,
              out_dir: str | Path | None = None,
              progress=None) -> tuple[list[SweepRow], RunManifest]:
    """Sweep all configured energies, emitting incremental outputs.

    Per-energy failures are recorded and the sweep continues; the caller
    maps any failure to a nonzero exit status.
    """
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _check_writable(out)

    manifest = RunManifest(
        config=config.resolved_dict(), master_seed=master_seed, threads=threads)
    summary_path = out / "summary.csv"
    summary_path.write_text(SUMMARY_HEADER + "\n", encoding="utf-8")

    rows: list[SweepRow] = []
    for i, energy in enumerate(config.energies):
        t0 = time.perf_counter()
        try:
            row = measure_energy(config, energy, master_seed, i, threads=threads)
        except Exception as exc:   # per-energy isolation
            row = SweepRow(energy=energy, result=None, lossless=None,
                           shot_noise=float("nan"), n_aborted=0,
                           wall_reference_s=0.0, wall_signal_s=0.0,
                           error=f"{type(exc).__name__}: {exc}")
            manifest.failed_energies.append(energy * 1e12)
        rows.append(row)
        manifest.trajectory_aborts += row.n_aborted
        manifest.wall_clock_s[f"{energy * 1e12:.1f}pJ"] = round(
            time.perf_counter() - t0, 3)
        with open(summary_path, "a", encoding="utf-8") as f:
            f.write(row.summary_line() + "\n")
        if not row.failed:
            row.result.write_curve_csv(out / _vtheta_filename(energy))
        if progress is not None:
            progress(row)

    emit_outputs(rows, manifest, out)
    return rows, manifest


def emit_outputs(rows: list[SweepRow], manifest: RunManifest,
                 out_dir: str | Path) -> None:
    """Write the summary, per-panel plot data, and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _check_writable(out)

    with open(out / "summary.csv", "w", encoding="utf-8") as f:
        f.write(SUMMARY_HEADER + "\n")
        for row in rows:
            f.write(row.summary_line() + "\n")

    ok = [r for r in rows if not r.failed]
    with open(out / "fig_angle.csv", "w", encoding="utf-8") as f:
        f.write("energy_pJ,theta_sq_deg\n")
        for r in ok:
            f.write(f"{r.energy * 1e12:.1f},{r.result.theta_sq_deg:.3f}\n")
    with open(out / "fig_squeezing.csv", "w", encoding="utf-8") as f:
        f.write("energy_pJ,squeezing_dB,sampling_err_dB\n")
        for r in ok:
            f.write(f"{r.energy * 1e12:.1f},{r.result.squeezing_db:.3f},"
                    f"{r.result.sampling_error_db:.3f}\n")
    with open(out / "fig_antisqueezing.csv", "w", encoding="utf-8") as f:
        f.write("energy_pJ,antisqueezing_dB,sampling_err_dB\n")
        for r in ok:
            err = 10.0 / math.log(10.0) * r.result.err_v_max / r.result.v_max
            f.write(f"{r.energy * 1e12:.1f},{r.result.antisqueezing_db:.3f},"
                    f"{err:.3f}\n")

    manifest.write(out / "manifest.json")


def _check_writable(out: Path) -> None:
    probe = out / ".write_probe"
    try:
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise ParameterError(f"output directory {out} is not writable: {exc}") from exc


# -- measured-data ingestion and comparison ---------------------------------

@dataclass
class MeasuredPoint:
    """One experimental trace record; raw fields allow electronic correction."""

    energy: float                 # J
    squeezing_db: float
    antisqueezing_db: float
    theta_deg: float
    raw_noise_dbm: float | None = None
    electronic_floor_dbm: float | None = None
    squeezing_err_db: float | None = None

    def __post_init__(self):
        if self.raw_noise_dbm is not None and self.electronic_floor_dbm is not None:
            if self.raw_noise_dbm <= self.electronic_floor_dbm:
                raise ParameterError(
                    "raw noise power must exceed the electronic floor")


def correct_electronic_noise(raw_dbm: float, floor_dbm: float) -> float:
    """Linear-power subtraction of the electronics: 10 log10(10^(r/10) - 10^(f/10))."""
    if floor_dbm == -math.inf:
        return raw_dbm
    if raw_dbm <= floor_dbm:
        raise ParameterError(
            f"raw power {raw_dbm} dBm does not exceed the electronic floor "
            f"{floor_dbm} dBm")
    return 10.0 * math.log10(10.0 ** (raw_dbm / 10.0) - 10.0 ** (floor_dbm / 10.0))


def corrected_squeezing_db(point: MeasuredPoint) -> float:
    """Squeezing with the electronics subtracted from the squeezed trace.

    The shot-noise trace is assumed far above the floor, so the relative
    value shifts by the correction applied to the squeezed trace alone.
    """
    if point.raw_noise_dbm is None or point.electronic_floor_dbm is None:
        return point.squeezing_db
    corr = correct_electronic_noise(point.raw_noise_dbm, point.electronic_floor_dbm)
    return point.squeezing_db + (corr - point.raw_noise_dbm)


def load_measured_csv(path) -> list[MeasuredPoint]:
    """Read measured points: energy_pJ,squeezing_dB,antisqueezing_dB,theta_deg[,...]."""
    points = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        idx = {name.strip(): i for i, name in enumerate(header)}
        required = ("energy_pJ", "squeezing_dB", "antisqueezing_dB", "theta_deg")
        for name in required:
            if name not in idx:
                raise ParameterError(f"measured data is missing column {name!r}")

        def get(parts, name):
            i = idx.get(name)
            if i is None or i >= len(parts) or parts[i].strip() == "":
                return None
            return float(parts[i])

        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            points.append(MeasuredPoint(
                energy=get(parts, "energy_pJ") * 1e-12,
                squeezing_db=get(parts, "squeezing_dB"),
                antisqueezing_db=get(parts, "antisqueezing_dB"),
                theta_deg=get(parts, "theta_deg"),
                raw_noise_dbm=get(parts, "raw_noise_dBm"),
                electronic_floor_dbm=get(parts, "electronic_floor_dBm"),
                squeezing_err_db=get(parts, "squeezing_err_dB"),
            ))
    return points


@dataclass
class ComparisonPoint:
    energy: float
    residual_squeezing_db: float
    residual_antisqueezing_db: float
    residual_theta_deg: float
    outside_error_bars: bool


@dataclass
class ComparisonReport:
    points: list[ComparisonPoint]
    rms_squeezing_db: float
    rms_antisqueezing_db: float
    rms_theta_deg: float
    skipped_energies: list

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("energy_pJ,res_squeezing_dB,res_antisqueezing_dB,"
                    "res_theta_deg,outside_error_bars\n")
            for p in self.points:
                f.write(f"{p.energy * 1e12:.1f},{p.residual_squeezing_db:.3f},"
                        f"{p.residual_antisqueezing_db:.3f},"
                        f"{p.residual_theta_deg:.3f},"
                        f"{int(p.outside_error_bars)}\n")


def compare_to_measurement(rows: list[SweepRow],
                           measured: list[MeasuredPoint]) -> ComparisonReport:
    """Per-point residuals (sim - measured) with linear interpolation in energy.

    Simulated angles are compared by magnitude (experimental angles are
    unsigned).  Points outside the simulated energy range are skipped with a
    warning.  The error-bar flag uses the measured error when provided,
    otherwise 3x the simulated sampling error.
    """
    ok = sorted((r for r in rows if not r.failed), key=lambda r: r.energy)
    if not ok:
        raise ParameterError("no successful sweep rows to compare against")
    if not measured:
        raise ParameterError("no measured points")
    e = np.array([r.energy for r in ok])
    sq = np.array([r.result.squeezing_db for r in ok])
    asq = np.array([r.result.antisqueezing_db for r in ok])
    th = np.array([abs(r.result.theta_sq_deg) for r in ok])
    err = np.array([r.result.sampling_error_db for r in ok])

    points, skipped = [], []
    for m in measured:
        if not (e[0] <= m.energy <= e[-1]):
            skipped.append(m.energy)
            warnings.warn(
                f"measured point at {m.energy * 1e12:.1f} pJ is outside the "
                f"simulated range; skipped", stacklevel=2)
            continue
        sq_i = float(np.interp(m.energy, e, sq))
        asq_i = float(np.interp(m.energy, e, asq))
        th_i = float(np.interp(m.energy, e, th))
        err_i = float(np.interp(m.energy, e, err))
        res_sq = sq_i - corrected_squeezing_db(m)
        bar = m.squeezing_err_db if m.squeezing_err_db is not None else 3.0 * err_i
        points.append(ComparisonPoint(
            energy=m.energy,
            residual_squeezing_db=res_sq,
            residual_antisqueezing_db=asq_i - m.antisqueezing_db,
            residual_theta_deg=th_i - abs(m.theta_deg),
            outside_error_bars=abs(res_sq) > bar,
        ))

    def rms(vals):
        return float(np.sqrt(np.mean(np.square(vals)))) if len(vals) else float("nan")

    return ComparisonReport(
        points=points,
        rms_squeezing_db=rms([p.residual_squeezing_db for p in points]),
        rms_antisqueezing_db=rms([p.residual_antisqueezing_db for p in points]),
        rms_theta_deg=rms([p.residual_theta_deg for p in points]),
        skipped_energies=skipped,
    )


# -- GAWBS fitting against measured angles ----------------------------------

def fit_gawbs_to_angles(config: RunConfig, master_seed: int,
                        angle_points: list[tuple[float, float]],
                        threads: int = 1, g_max: float = 1e6):
    """Fit the GAWBS coefficient to measured (energy_J, theta_deg) points.

    Each energy is propagated once; candidate coefficients re-rotate the
    cached Stokes samples, so the golden-section search costs no extra
    propagation.  Jitter draws are fixed per energy: the objective is smooth
    in g.
    """
    from .polarimetry import fit_gawbs_coefficient

    grid = make_grid(config.n_points, config.window)
    cache = {}
    for i, (energy, _theta) in enumerate(angle_points):
        spec = config.spec.with_energy(energy)
        ref = EnsembleConfig(
            n_trajectories=config.reference_trajectories,
            master_seed=master_seed ^ REFERENCE_STREAM_SALT,
            noise_enabled=True,
        )
        snl = shot_noise_reference(spec, grid, ref, threads=threads,
                                   theta_points=config.theta_points)
        prop = Propagator(spec, grid, config.model, config.stepper)
        mom = prop.run_moments(config.ensemble(master_seed), threads=threads)
        samples = StokesSampleSet(
            mom.n_x[mom.kept], mom.n_y[mom.kept], mom.cross[mom.kept],
            config.relative_phase)
        cache[energy] = (samples, snl, i)

    def simulate_theta(energy, g):
        samples, snl, i = cache[energy]
        if g > 0:
            rng = trajectory_rng(master_seed ^ GAWBS_STREAM_SALT, i)
            samples = apply_gawbs(samples, g, energy, rng)
        return extract_squeezing(samples, snl,
                                 theta_points=config.theta_points).theta_sq_deg

    return fit_gawbs_coefficient(angle_points, simulate_theta, g_max=g_max)
