"""Split-step stochastic propagation of both polarization envelopes.

The two modes evolve independently (no cross coupling) under dispersion,
attenuation, Kerr nonlinearity with delayed Raman response, and in-fiber
Raman phase noise.  Trajectories are integrated in fixed-size batches whose
partitioning never depends on the worker count, so ensemble observables are
bit-identical for any parallelism.

Schemes:

* ``strang``  - symmetrized (linear-half, nonlinear, linear-half) steps,
  second order; the default for stochastic ensembles.
* ``strang4`` - triple-jump composition of three symmetrized substeps per
  step, fourth order in dz; used where deterministic accuracy matters
  (soliton invariance, step-doubling checks).  Raman noise, when active, is
  injected once per step with the full-step variance.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import EnsembleError, ParameterError, TrajectoryAbort
from .field import EnsembleConfig, FieldState, draw_vacuum_noise, trajectory_rng
from .grid import TimeGrid, make_grid, to_freq, to_time
from .params import ExperimentSpec
from .raman import RamanModel, convolution_multiplier, make_noise_sampler

MAX_STEP_PHASE = 0.05          # rad, per-substep Kerr phase bound at peak power
_TRIPLE_JUMP_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_TRIPLE_JUMP_W0 = 1.0 - 2.0 * _TRIPLE_JUMP_W1


@dataclass(frozen=True)
class PropagationModel:
    """Physics term toggles; disabling everything yields the identity map.

    ``raman_noise_enabled`` splits the thermal-phonon noise from the
    deterministic delayed response so attribution runs (Raman on, noise off)
    are possible.
    """

    kerr_enabled: bool = True
    raman: RamanModel = field(default_factory=RamanModel)
    tod_enabled: bool = True
    loss_enabled: bool = False
    input_noise_enabled: bool = True
    raman_noise_enabled: bool = True


@dataclass(frozen=True)
class StepperConfig:
    n_steps: int = 4000
    scheme: str = "strang4"
    aliasing_guard: float = 1e-6   # max tolerated spectral-edge energy fraction
    guard_interval: int = 50       # steps between guard/finiteness checks
    batch_size: int = 128          # trajectories per block, fixed across thread counts

    def __post_init__(self):
        if self.n_steps < 1:
            raise ParameterError("n_steps must be >= 1")
        if self.scheme not in ("strang", "strang4"):
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.guard_interval < 1:
            raise ParameterError("guard_interval must be >= 1")


class Propagator:
    """Precomputed split-step operators for one (spec, grid, model, stepper)."""

    def __init__(self, spec: ExperimentSpec, grid: TimeGrid,
                 model: PropagationModel, stepper: StepperConfig):
        self.spec = spec
        self.grid = grid
        self.model = model
        self.stepper = stepper
        self.scales = spec.scales
        self.dz = spec.fiber.length / stepper.n_steps

        fiber = spec.fiber
        d = 1j * (fiber.beta2 / 2.0) * grid.omega**2
        if model.tod_enabled:
            d = d + 1j * (fiber.beta3 / 6.0) * grid.omega**3
        if model.loss_enabled:
            d = d - fiber.alpha_per_m / 2.0
        self._d_op = d

        self.gamma_flux = self.scales.gamma_flux if model.kerr_enabled else 0.0
        self.raman_active = (
            model.kerr_enabled
            and self.gamma_flux > 0.0
            and model.raman.enabled
            and model.raman.fraction > 0.0
        )
        self.noise_active = self.raman_active and model.raman_noise_enabled
        self.nonlinear_active = model.kerr_enabled and self.gamma_flux > 0.0

        self._validate_step_phase()

        if self.raman_active:
            self._conv_mult = convolution_multiplier(model.raman, grid)
        else:
            self._conv_mult = None
        if self.noise_active:
            self._noise_sampler = make_noise_sampler(
                model.raman, grid, self.gamma_flux, self.dz)
        else:
            self._noise_sampler = None

        # merged linear factors; strang4 composes three symmetrized substeps
        dz = self.dz
        if stepper.scheme == "strang":
            self._lin = {
                "edge": np.exp(d * dz / 2.0),
                "mid": None,
                "inner": np.exp(d * dz),
                "weights": (1.0,),
            }
        else:
            w1, w0 = _TRIPLE_JUMP_W1, _TRIPLE_JUMP_W0
            self._lin = {
                "edge": np.exp(d * w1 * dz / 2.0),
                "mid": np.exp(d * (w1 + w0) * dz / 2.0),
                "inner": np.exp(d * w1 * dz),
                "weights": (w1, w0, w1),
            }
        self._lin_total = np.exp(d * fiber.length)

        guard_bins = grid.omega_nyquist * 0.9
        self._guard_mask = np.abs(grid.omega) >= guard_bins
        # symmetric-ordering vacuum floor in the edge band: half a photon per
        # mode with variance 1/4; the guard watches the excess above the mean
        # plus a 6-sigma allowance for the floor's own fluctuations
        n_edge = float(self._guard_mask.sum())
        self._guard_vacuum_photons = n_edge / 2.0 + 6.0 * math.sqrt(n_edge) / 2.0

    # -- validation ------------------------------------------------------

    def _validate_step_phase(self):
        if not self.nonlinear_active:
            return
        peak_flux = self.scales.peak_power / self.scales.photon_energy
        wmax = max(abs(w) for w in
                   ((1.0,) if self.stepper.scheme == "strang"
                    else (_TRIPLE_JUMP_W1, _TRIPLE_JUMP_W0)))
        phase = self.gamma_flux * peak_flux * self.dz * wmax
        if phase >= MAX_STEP_PHASE:
            raise ParameterError(
                f"per-step nonlinear phase {phase:.3f} rad exceeds "
                f"{MAX_STEP_PHASE} rad; increase n_steps"
            )

    # -- public single-array operations (1-D or batched 2-D) --------------

    def linear_step(self, u: np.ndarray, half: bool = False) -> np.ndarray:
        """One frequency-domain linear step over dz (dz/2 when half)."""
        fac = np.exp(self._d_op * (self.dz / 2.0 if half else self.dz))
        return to_time(to_freq(u) * fac)

    def nonlinear_step(self, u: np.ndarray, raman_noise: np.ndarray | None = None,
                       dz: float | None = None) -> np.ndarray:
        """Kerr + delayed-Raman phase rotation over dz; photon number invariant.

        ``raman_noise`` is an additive real phase field (radians), typically
        from :func:`polsqueeze.raman.raman_noise_sample`.
        """
        if not self.nonlinear_active:
            return u.copy()
        dz = self.dz if dz is None else dz
        squeeze = u.ndim == 1
        ub = np.array(u, dtype=np.complex128, ndmin=2)
        intensity = np.empty(ub.shape, dtype=np.float64)
        _kernels.intensity_into(ub, intensity)
        phase = self._nl_phase(intensity, dz)
        if raman_noise is not None:
            phase += raman_noise
        if squeeze and not np.all(np.isfinite(phase)):
            # batched rows are flagged per trajectory at the guard checks
            raise TrajectoryAbort("non-finite field in nonlinear step")
        _kernels.rotate(ub, phase)
        return ub[0] if squeeze else ub

    def _nl_phase(self, intensity: np.ndarray, dz: float) -> np.ndarray:
        fr = self.model.raman.fraction if self.raman_active else 0.0
        g = self.gamma_flux * dz
        if fr == 0.0:
            return g * intensity
        delayed = np.fft.irfft(
            np.fft.rfft(intensity, axis=-1) * self._conv_mult,
            self.grid.n_points, axis=-1)
        phase = np.empty_like(intensity)
        _kernels.kerr_phase_into(intensity, delayed, g * (1.0 - fr), g * fr, phase)
        return phase

    # -- batched trajectory propagation -----------------------------------

    def _draw_step_noise(self, rngs, live) -> np.ndarray | None:
        if not self.noise_active:
            return None
        k = self._noise_sampler.draws_per_sample
        normals = np.zeros((len(rngs), k))
        for b, rng in enumerate(rngs):
            if live[b]:
                normals[b] = rng.standard_normal(k)
        return self._noise_sampler.sample(normals)

    def _check_batch(self, u, live, aborted, step):
        c = to_freq(u)
        scale = self.grid.n_points * self.grid.dt   # photons = |c|^2 * n * dt
        total = (c.real**2 + c.imag**2).sum(axis=-1) * scale
        edge = (c[:, self._guard_mask].real**2
                + c[:, self._guard_mask].imag**2).sum(axis=-1) * scale
        excess = edge - self._guard_vacuum_photons
        finite = np.isfinite(total)
        with np.errstate(invalid="ignore", divide="ignore"):
            bad = ~finite | (excess > self.stepper.aliasing_guard * total)
        for b in np.nonzero(bad & live)[0]:
            live[b] = False
            aborted[b] = step
            u[b] = 0.0   # keep the row numerically inert

    def _propagate_pol(self, u: np.ndarray, rngs, live, aborted) -> np.ndarray:
        """Advance a (B, n) batch of one polarization through the fiber."""
        if not self.nonlinear_active:
            # exact collapse: the whole fiber is one diagonal operator
            return to_time(to_freq(u) * self._lin_total)

        scheme = self.stepper.scheme
        weights = self._lin["weights"]
        nsteps = self.stepper.n_steps
        u = to_time(to_freq(u) * self._lin["edge"])
        for s in range(nsteps):
            noise = self._draw_step_noise(rngs, live)
            if scheme == "strang":
                u = self.nonlinear_step(u, noise, dz=self.dz)
                fac = self._lin["inner"] if s < nsteps - 1 else self._lin["edge"]
                u = to_time(to_freq(u) * fac)
            else:
                u = self.nonlinear_step(u, noise, dz=weights[0] * self.dz)
                u = to_time(to_freq(u) * self._lin["mid"])
                u = self.nonlinear_step(u, None, dz=weights[1] * self.dz)
                u = to_time(to_freq(u) * self._lin["mid"])
                u = self.nonlinear_step(u, None, dz=weights[2] * self.dz)
                fac = self._lin["inner"] if s < nsteps - 1 else self._lin["edge"]
                u = to_time(to_freq(u) * fac)
            if (s + 1) % self.stepper.guard_interval == 0 or s == nsteps - 1:
                self._check_batch(u, live, aborted, s)
        return u

    def propagate(self, state: FieldState,
                  rng: np.random.Generator | None = None,
                  snapshot_every: int | None = None,
                  snapshot_dir=None) -> FieldState:
        """Propagate one trajectory; Raman noise draws come from ``rng``.

        Within a trajectory the stream order is: all x-polarization step
        noise, then all y-polarization step noise (input vacuum noise, when
        used, is drawn before propagation by the ensemble driver).

        With ``snapshot_every`` = k, the field is dumped every k steps to
        ``snapshot_dir`` in the field-CSV record format (debugging only; the
        snapshots re-run the x and y passes jointly step by step).
        """
        if self.noise_active and rng is None:
            raise ParameterError("rng required when Raman noise is active")
        if snapshot_every:
            return self._propagate_with_snapshots(state, rng, snapshot_every,
                                                  snapshot_dir)
        rngs = [rng]
        live = np.array([True])
        aborted = np.array([-1])
        ux = self._propagate_pol(state.pol_x[None, :].copy(), rngs, live, aborted)
        uy = self._propagate_pol(state.pol_y[None, :].copy(), rngs, live, aborted)
        if not live[0]:
            raise TrajectoryAbort(f"trajectory aborted at step {int(aborted[0])}")
        return FieldState(state.grid, ux[0], uy[0])

    def _propagate_with_snapshots(self, state, rng, every, out_dir):
        from pathlib import Path

        from .field import write_field_csv

        out = Path(out_dir if out_dir is not None else ".")
        out.mkdir(parents=True, exist_ok=True)
        nsteps = self.stepper.n_steps
        total = self.spec.fiber.length
        current = state
        done = 0
        piece_idx = 0
        while done < nsteps:
            chunk = min(every, nsteps - done)
            piece = Propagator(
                ExperimentSpec(
                    fiber=replace(self.spec.fiber,
                                  length=total * chunk / nsteps),
                    pulse=self.spec.pulse, detection=self.spec.detection),
                self.grid, self.model,
                replace(self.stepper, n_steps=chunk))
            current = piece.propagate(current, rng)
            done += chunk
            piece_idx += 1
            z_mm = total * done / nsteps * 1e3
            write_field_csv(current, out / f"snapshot_{piece_idx:04d}_{z_mm:.1f}mm.csv")
        return current

    # -- ensembles ---------------------------------------------------------

    def _run_block(self, mean: FieldState, ensemble: EnsembleConfig,
                   indices: np.ndarray):
        """Propagate a block of trajectories; returns per-trajectory moments."""
        nb = len(indices)
        n = self.grid.n_points
        rngs = [trajectory_rng(ensemble.master_seed, int(i)) for i in indices]
        ux = np.empty((nb, n), dtype=np.complex128)
        uy = np.empty((nb, n), dtype=np.complex128)
        for b, rng in enumerate(rngs):
            if ensemble.noise_enabled:
                ux[b] = mean.pol_x + draw_vacuum_noise(self.grid, rng)
                uy[b] = mean.pol_y + draw_vacuum_noise(self.grid, rng)
            else:
                ux[b] = mean.pol_x
                uy[b] = mean.pol_y
        live = np.ones(nb, dtype=bool)
        aborted = np.full(nb, -1)
        ux = self._propagate_pol(ux, rngs, live, aborted)
        uy = self._propagate_pol(uy, rngs, live, aborted)
        dt = self.grid.dt
        nx = (ux.real**2 + ux.imag**2).sum(axis=-1) * dt
        ny = (uy.real**2 + uy.imag**2).sum(axis=-1) * dt
        cross = (np.conj(ux) * uy).sum(axis=-1) * dt
        return indices, nx, ny, cross, live, ux, uy

    def _blocks(self, n_trajectories: int):
        bs = self.stepper.batch_size
        return [np.arange(i, min(i + bs, n_trajectories))
                for i in range(0, n_trajectories, bs)]

    def run_moments(self, ensemble: EnsembleConfig, threads: int = 1,
                    keep_fields: bool = False,
                    mean_state: FieldState | None = None):
        """Propagate the full ensemble; returns an EnsembleMoments record.

        Block partitioning is fixed by ``batch_size``; results are assembled
        by trajectory index, so any ``threads`` value yields identical
        numbers.  ``mean_state`` defaults to the coherent sech input.
        """
        from .field import init_coherent_sech

        mean = mean_state if mean_state is not None \
            else init_coherent_sech(self.spec, self.grid)
        ntraj = ensemble.n_trajectories
        nx = np.empty(ntraj)
        ny = np.empty(ntraj)
        cross = np.empty(ntraj, dtype=np.complex128)
        live = np.ones(ntraj, dtype=bool)
        fields: list[FieldState | None] = [None] * ntraj if keep_fields else []

        blocks = self._blocks(ntraj)
        if threads <= 1:
            results = (self._run_block(mean, ensemble, idx) for idx in blocks)
            for res in results:
                self._store_block(res, nx, ny, cross, live, fields, keep_fields)
        else:
            with ProcessPoolExecutor(
                max_workers=threads,
                initializer=_pool_init,
                initargs=(self.spec, self.grid.n_points, self.grid.window,
                          self.model, self.stepper),
            ) as pool:
                jobs = [(ensemble, idx, mean.pol_x, mean.pol_y) for idx in blocks]
                for res in pool.map(_pool_run_block, jobs):
                    self._store_block(res, nx, ny, cross, live, fields, keep_fields)

        n_aborted = int((~live).sum())
        if n_aborted > 0.01 * ntraj:
            raise EnsembleError(
                f"{n_aborted}/{ntraj} trajectories aborted (> 1% budget)")
        return EnsembleMoments(
            n_x=nx, n_y=ny, cross=cross, kept=live,
            n_aborted=n_aborted, fields=fields if keep_fields else None,
        )

    def _store_block(self, res, nx, ny, cross, live, fields, keep_fields):
        indices, bnx, bny, bcross, blive, ux, uy = res
        nx[indices] = bnx
        ny[indices] = bny
        cross[indices] = bcross
        live[indices] = blive
        if keep_fields:
            for b, i in enumerate(indices):
                if blive[b]:
                    fields[i] = FieldState(self.grid, ux[b].copy(), uy[b].copy())

    def propagate_ensemble(self, ensemble: EnsembleConfig,
                           threads: int = 1) -> list[FieldState]:
        """Spec-level ensemble run returning propagated fields (aborts dropped)."""
        mom = self.run_moments(ensemble, threads=threads, keep_fields=True)
        return [f for f in mom.fields if f is not None]


@dataclass
class EnsembleMoments:
    """Per-trajectory pulse-integrated moments of a propagated ensemble."""

    n_x: np.ndarray
    n_y: np.ndarray
    cross: np.ndarray
    kept: np.ndarray
    n_aborted: int
    fields: list | None = None


# -- process-pool plumbing (workers rebuild the propagator once) -----------

_POOL_PROP: Propagator | None = None


def _pool_init(spec, n_points, window, model, stepper):  # pragma: no cover - subprocess
    global _POOL_PROP
    _POOL_PROP = Propagator(spec, make_grid(n_points, window), model, stepper)


def _pool_run_block(args):  # pragma: no cover - subprocess
    ensemble, indices, mean_x, mean_y = args
    prop = _POOL_PROP
    mean = FieldState(prop.grid, mean_x, mean_y)
    return prop._run_block(mean, ensemble, indices)


# -- module-level wrappers matching the operation contracts ----------------

def propagate(state: FieldState, spec: ExperimentSpec, model: PropagationModel,
              stepper: StepperConfig,
              rng: np.random.Generator | None = None) -> FieldState:
    return Propagator(spec, state.grid, model, stepper).propagate(state, rng)


def propagate_ensemble(spec: ExperimentSpec, grid: TimeGrid,
                       model: PropagationModel, stepper: StepperConfig,
                       ensemble: EnsembleConfig, threads: int = 1) -> list[FieldState]:
    return Propagator(spec, grid, model, stepper).propagate_ensemble(
        ensemble, threads=threads)
