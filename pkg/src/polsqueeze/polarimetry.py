"""Virtual Stokes measurement and squeezing extraction.

The propagated polarization modes are overlapped with a pi/2 relative phase,
giving a circular mean state whose S1-S2 plane carries no mean signal (the
dark plane).  Dark-plane variances are normalized to an operationally
defined shot-noise level: the identical pipeline run on a gamma = 0,
Raman-off, loss-off vacuum ensemble at the same energy and grid.

Angle convention: theta is measured from the amplitude-quadrature direction
(the S1 axis) and reported signed in (-90, 90] degrees.  Kerr shear places
the variance minimum at small negative angles; added phase noise (GAWBS)
moves it toward zero, i.e. strictly increases the signed angle.  Experiments
usually quote magnitudes, so fits against measured angles compare |theta|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CalibrationError, ParameterError
from .field import EnsembleConfig, FieldState
from .grid import TimeGrid
from .params import ExperimentSpec

DEFAULT_RELATIVE_PHASE = math.pi / 2.0
DEFAULT_THETA_POINTS = 720
LOW_CONFIDENCE_TRAJECTORIES = 100
# Shot-noise flatness budget: 2% systematic plus a sampling allowance.
SNL_FLATNESS_SYSTEMATIC = 0.02


@dataclass
class StokesSampleSet:
    """Per-trajectory pulse-integrated Stokes observables.

    Stored as the photon numbers of each mode plus the complex cross
    integral Z = sum conj(ux) uy dt; s2/s3 follow from Z and the applied
    relative phase.  Keeping Z exact lets measurement-side phase jitter
    (GAWBS) act as a rotation without revisiting the fields.
    """

    n_x: np.ndarray
    n_y: np.ndarray
    cross: np.ndarray
    relative_phase: float = DEFAULT_RELATIVE_PHASE

    @property
    def n_trajectories(self) -> int:
        return len(self.n_x)

    @property
    def s0(self) -> np.ndarray:
        return self.n_x + self.n_y

    @property
    def s1(self) -> np.ndarray:
        return self.n_x - self.n_y

    @property
    def s2(self) -> np.ndarray:
        return 2.0 * np.real(self.cross * np.exp(1j * self.relative_phase))

    @property
    def s3(self) -> np.ndarray:
        return 2.0 * np.imag(self.cross * np.exp(1j * self.relative_phase))


def stokes_samples(fields, relative_phase: float = DEFAULT_RELATIVE_PHASE) -> StokesSampleSet:
    """Reduce an ensemble of propagated FieldStates to Stokes samples."""
    fields = list(fields)
    if not fields:
        raise ParameterError("empty ensemble")
    grid = fields[0].grid
    n = len(fields)
    nx = np.empty(n)
    ny = np.empty(n)
    cross = np.empty(n, dtype=np.complex128)
    for i, f in enumerate(fields):
        if f.grid.n_points != grid.n_points or f.grid.dt != grid.dt:
            raise ParameterError("all trajectories must share one grid")
        nx[i] = (f.pol_x.real**2 + f.pol_x.imag**2).sum() * grid.dt
        ny[i] = (f.pol_y.real**2 + f.pol_y.imag**2).sum() * grid.dt
        cross[i] = (np.conj(f.pol_x) * f.pol_y).sum() * grid.dt
    return StokesSampleSet(nx, ny, cross, relative_phase)


def _dark_plane_covariance(samples: StokesSampleSet):
    s1, s2 = samples.s1, samples.s2
    if len(s1) < 2:
        raise ParameterError("need at least 2 trajectories for a variance")
    c = np.cov(np.vstack([s1, s2]), ddof=1)
    return float(c[0, 0]), float(c[1, 1]), float(c[0, 1])


def dark_plane_variance(samples: StokesSampleSet, theta: float) -> float:
    """Unbiased ensemble variance of s1 cos(theta) + s2 sin(theta), photons^2."""
    c11, c22, c12 = _dark_plane_covariance(samples)
    ct, st = math.cos(theta), math.sin(theta)
    return c11 * ct * ct + c22 * st * st + 2.0 * c12 * st * ct


@dataclass
class SqueezingResult:
    """Normalized dark-plane variance curve and its extrema.

    ``variance_snl`` is V(theta)/SNL on ``theta_grid``; v_min/v_max are the
    refined extrema in the same units.  ``err_v_min``/``err_v_max`` are one
    standard deviation of the variance estimators.
    """

    theta_grid: np.ndarray
    variance_snl: np.ndarray
    v_min: float
    v_max: float
    theta_sq_deg: float
    err_v_min: float
    err_v_max: float
    shot_noise_reference: float
    n_trajectories: int
    low_confidence: bool

    @property
    def squeezing_db(self) -> float:
        return 10.0 * math.log10(self.v_min)

    @property
    def antisqueezing_db(self) -> float:
        return 10.0 * math.log10(self.v_max)

    @property
    def sampling_error_db(self) -> float:
        # delta method at the squeezing point
        return 10.0 / math.log(10.0) * self.err_v_min / self.v_min

    @property
    def variance_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.variance_snl)

    def uncertainty_product(self) -> float:
        return self.v_min * self.v_max

    def write_curve_csv(self, path) -> None:
        data = np.column_stack([np.degrees(self.theta_grid), self.variance_db])
        with open(path, "w", encoding="utf-8") as f:
            f.write("theta_deg,variance_dB\n")
            for th, v in data:
                f.write(f"{th:.3f},{v:.3f}\n")

    def summary_record(self, energy: float) -> str:
        """One summary line (energy_pJ, sq_dB, antisq_dB, theta_deg, err_dB)."""
        return (f"{energy * 1e12:.1f},{self.squeezing_db:.3f},"
                f"{self.antisqueezing_db:.3f},{self.theta_sq_deg:.3f},"
                f"{self.sampling_error_db:.3f}")


def _variance_of_variance(x: np.ndarray) -> float:
    """Var of the unbiased sample variance (finite-sample, 4th-moment form)."""
    n = len(x)
    xc = x - x.mean()
    v = xc.dot(xc) / (n - 1)
    mu4 = np.mean(xc**4)
    return max((mu4 - v * v * (n - 3) / (n - 1)) / n, 0.0)


def _refine_extremum(c11, c22, c12, theta0, dtheta, minimum: bool):
    """Parabolic refinement of the grid extremum; exact curve re-evaluation."""
    def v(th):
        return (c11 * math.cos(th)**2 + c22 * math.sin(th)**2
                + 2.0 * c12 * math.sin(th) * math.cos(th))

    vm, v0, vp = v(theta0 - dtheta), v(theta0), v(theta0 + dtheta)
    denom = vm - 2.0 * v0 + vp
    shift = 0.0 if denom == 0.0 else 0.5 * (vm - vp) / denom * dtheta
    shift = float(np.clip(shift, -dtheta, dtheta))
    th = theta0 + shift
    return th, v(th)


def extract_squeezing(samples: StokesSampleSet, reference: float,
                      theta_points: int = DEFAULT_THETA_POINTS) -> SqueezingResult:
    """Scan the dark plane, refine the extrema, normalize to shot noise."""
    if reference <= 0:
        raise ParameterError("shot-noise reference must be positive")
    c11, c22, c12 = _dark_plane_covariance(samples)
    theta = np.linspace(0.0, math.pi, theta_points, endpoint=False)
    curve = (c11 * np.cos(theta)**2 + c22 * np.sin(theta)**2
             + 2.0 * c12 * np.sin(theta) * np.cos(theta))
    dtheta = math.pi / theta_points
    th_min, v_min = _refine_extremum(
        c11, c22, c12, float(theta[np.argmin(curve)]), dtheta, True)
    th_max, v_max = _refine_extremum(
        c11, c22, c12, float(theta[np.argmax(curve)]), dtheta, False)

    theta_sq = math.degrees(th_min)
    if theta_sq > 90.0:
        theta_sq -= 180.0

    s1, s2 = samples.s1, samples.s2
    x_min = s1 * math.cos(th_min) + s2 * math.sin(th_min)
    x_max = s1 * math.cos(th_max) + s2 * math.sin(th_max)
    err_min = math.sqrt(_variance_of_variance(x_min)) / reference
    err_max = math.sqrt(_variance_of_variance(x_max)) / reference

    n = samples.n_trajectories
    return SqueezingResult(
        theta_grid=theta,
        variance_snl=curve / reference,
        v_min=v_min / reference,
        v_max=v_max / reference,
        theta_sq_deg=theta_sq,
        err_v_min=err_min,
        err_v_max=err_max,
        shot_noise_reference=reference,
        n_trajectories=n,
        low_confidence=n < LOW_CONFIDENCE_TRAJECTORIES,
    )


def shot_noise_reference(spec: ExperimentSpec, grid: TimeGrid,
                         ensemble: EnsembleConfig, threads: int = 1,
                         theta_points: int = DEFAULT_THETA_POINTS) -> float:
    """Shot-noise denominator from a gamma = 0 run of the identical pipeline.

    Kerr, Raman, and loss are disabled; input vacuum noise stays on.  The
    returned value is the theta-averaged dark-plane variance.  A flatness
    check guards against contamination: the spread across theta must stay
    within 2% plus a 4-sigma sampling allowance.
    """
    from .propagation import PropagationModel, Propagator, StepperConfig
    from .raman import RamanModel

    model = PropagationModel(
        kerr_enabled=False,
        raman=RamanModel(enabled=False),
        tod_enabled=True,
        loss_enabled=False,
        input_noise_enabled=True,
    )
    prop = Propagator(spec, grid, model, StepperConfig(n_steps=1, scheme="strang"))
    ens = replace(ensemble, noise_enabled=True)
    mom = prop.run_moments(ens, threads=threads)
    samples = StokesSampleSet(
        mom.n_x[mom.kept], mom.n_y[mom.kept], mom.cross[mom.kept])
    c11, c22, c12 = _dark_plane_covariance(samples)
    theta = np.linspace(0.0, math.pi, theta_points, endpoint=False)
    curve = (c11 * np.cos(theta)**2 + c22 * np.sin(theta)**2
             + 2.0 * c12 * np.sin(theta) * np.cos(theta))
    mean = float(curve.mean())
    n = samples.n_trajectories
    allowance = SNL_FLATNESS_SYSTEMATIC + 4.0 * math.sqrt(2.0 / (n - 1))
    spread = float((curve.max() - curve.min()) / mean)
    if spread > allowance:
        raise CalibrationError(
            f"shot-noise reference varies by {spread:.1%} across theta "
            f"(allowed {allowance:.1%}); calibration is suspect"
        )
    return mean


# -- detection-side transformations ----------------------------------------

def apply_lumped_loss_db(v_db: float, eta: float) -> float:
    """Beam-splitter map on a normalized variance given in dB."""
    _check_eta(eta)
    return 10.0 * math.log10(eta * 10.0 ** (v_db / 10.0) + (1.0 - eta))


def infer_lossless(v_measured_db: float, eta: float) -> float:
    """Invert the lumped-loss map; errors when the input is unphysical."""
    _check_eta(eta)
    v = 10.0 ** (v_measured_db / 10.0)
    bound = 1.0 - eta
    if v <= bound:
        raise ParameterError(
            f"measured variance {v:.4f} is at or below the loss floor "
            f"1 - eta = {bound:.4f}; no physical input variance exists"
        )
    return 10.0 * math.log10((v - bound) / eta)


def _check_eta(eta: float):
    if not (0.0 < eta <= 1.0):
        raise ParameterError(f"transmittance must be in (0, 1], got {eta}")


def apply_lumped_loss(obj, eta: float, rng: np.random.Generator | None = None):
    """V -> eta V + (1 - eta) in shot-noise units.

    Accepts a SqueezingResult (returns the transformed result), a dB float,
    or a StokesSampleSet (requires ``rng`` to draw the admixed vacuum and a
    preceding shot-noise reference is then taken on the lossless samples).
    """
    _check_eta(eta)
    if isinstance(obj, SqueezingResult):
        scale = eta
        return SqueezingResult(
            theta_grid=obj.theta_grid,
            variance_snl=scale * obj.variance_snl + (1.0 - eta),
            v_min=scale * obj.v_min + (1.0 - eta),
            v_max=scale * obj.v_max + (1.0 - eta),
            theta_sq_deg=obj.theta_sq_deg,
            err_v_min=scale * obj.err_v_min,
            err_v_max=scale * obj.err_v_max,
            shot_noise_reference=obj.shot_noise_reference,
            n_trajectories=obj.n_trajectories,
            low_confidence=obj.low_confidence,
        )
    if isinstance(obj, StokesSampleSet):
        if rng is None:
            raise ParameterError("sample-level loss needs an rng for the vacuum admixture")
        # Stokes observables are quadratic in the field, so trajectory
        # fluctuations and means both scale by eta; the signal-vacuum beat
        # adds eta (1 - eta) <S0> of fresh Gaussian noise per component.
        # Relative to the eta-scaled shot noise this is the spec map
        # V' = eta V + (1 - eta).
        snl = float(np.mean(obj.s0))
        n = obj.n_trajectories
        sig = math.sqrt(eta * (1.0 - eta) * snl)
        d1, d2, d3 = (rng.standard_normal(n) * sig for _ in range(3))
        nx = eta * obj.n_x + d1 / 2.0
        ny = eta * obj.n_y - d1 / 2.0
        cross = eta * obj.cross \
            + 0.5 * (d2 + 1j * d3) * np.exp(-1j * obj.relative_phase)
        return StokesSampleSet(nx, ny, cross, obj.relative_phase)
    return apply_lumped_loss_db(float(obj), eta)


def apply_gawbs(obj, coefficient: float, pulse_energy: float,
                rng: np.random.Generator):
    """Independent per-polarization phase jitter exp(i dphi).

    dphi ~ N(0, coefficient * E_pol) with E_pol = pulse_energy / 2 (energies
    are totals over both modes throughout the package).  Mean photon numbers
    are unchanged.  Accepts a FieldState (single trajectory, x draw first)
    or a StokesSampleSet (per-trajectory draws, x then y).
    """
    if coefficient < 0:
        raise ParameterError("GAWBS coefficient must be >= 0")
    var = coefficient * pulse_energy / 2.0
    sigma = math.sqrt(var)
    if isinstance(obj, FieldState):
        phx, phy = rng.standard_normal(2) * sigma
        return FieldState(obj.grid, obj.pol_x * np.exp(1j * phx),
                          obj.pol_y * np.exp(1j * phy))
    if isinstance(obj, StokesSampleSet):
        n = obj.n_trajectories
        phx = rng.standard_normal(n) * sigma
        phy = rng.standard_normal(n) * sigma
        return StokesSampleSet(
            obj.n_x.copy(), obj.n_y.copy(),
            obj.cross * np.exp(1j * (phy - phx)),
            obj.relative_phase,
        )
    raise ParameterError(f"cannot apply GAWBS to {type(obj).__name__}")


@dataclass
class GawbsFit:
    coefficient: float
    rss: float
    residuals_deg: list
    iterations: int


def fit_gawbs_coefficient(measured, simulate_theta, g_max: float = 1e6,
                          tol: float = 1e-4, max_iter: int = 100) -> GawbsFit:
    """Golden-section fit of the phase-noise coefficient to measured angles.

    ``measured`` is a sequence of (energy_J, theta_deg) with unsigned
    experimental angles; ``simulate_theta(energy, g)`` returns the simulated
    signed angle in degrees.  The residual compares magnitudes.  Convergence
    is the bracket shrinking below tol * g_max within max_iter iterations.
    """
    pts = list(measured)
    if len(pts) < 3:
        raise ParameterError("need at least 3 angle points to fit")

    def rss(g):
        return sum((abs(simulate_theta(e, g)) - abs(th)) ** 2 for e, th in pts)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, float(g_max)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = rss(c), rss(d)
    it = 0
    while (b - a) > tol * g_max:
        it += 1
        if it > max_iter:
            raise RuntimeError(
                f"GAWBS fit did not converge in {max_iter} iterations; "
                f"bracket [{a:.4g}, {b:.4g}], rss ({fc:.4g}, {fd:.4g})"
            )
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = rss(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = rss(d)
    g = 0.5 * (a + b)
    res = [abs(simulate_theta(e, g)) - abs(th) for e, th in pts]
    return GawbsFit(coefficient=g, rss=float(sum(r * r for r in res)),
                    residuals_deg=res, iterations=it)


# -- diagnostics ------------------------------------------------------------

def single_beam_quadrature_variance(fields, theta: float, pol: str = "x") -> float:
    """Quadrature variance of one beam projected on its mean pulse mode.

    Normalized so a coherent ensemble gives 1; used to verify that the
    two-beam dark-plane variance equals <S0> times this quantity.
    """
    fields = list(fields)
    grid = fields[0].grid
    us = np.array([getattr(f, f"pol_{pol}") for f in fields])
    mean = us.mean(axis=0)
    norm = math.sqrt(float((np.abs(mean) ** 2).sum() * grid.dt))
    mode = mean / norm
    a = (np.conj(mode) * us).sum(axis=-1) * grid.dt
    x = 2.0 * np.real(a * np.exp(-1j * theta))
    return float(np.var(x, ddof=1))
