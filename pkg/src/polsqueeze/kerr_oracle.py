"""Single-mode Kerr oracles.

Two independent routes to the minimized quadrature variance of a coherent
state after a Kerr unitary exp(i kappa n^2):

* an exact truncated number-basis computation, and
* a single-mode truncated-Wigner Monte Carlo mirroring the fiber solver's
  phase-rotation step.

``total_phase`` is the classical nonlinear phase at the mean intensity,
2 kappa |alpha|^2.  Quadratures are X_theta = a e^{-i theta} + conj, so a
coherent state has variance 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class KerrVarianceResult:
    v_min: float
    v_max: float
    theta_min_rad: float
    mean_photons: float


def _kerr_state_moments(alpha_sq: float, total_phase: float,
                        amplitude_floor: float = 1e-12):
    """<a>, <a^2>, <n> of exp(i kappa n^2)|alpha> in a truncated number basis."""
    if alpha_sq <= 0:
        raise ParameterError("alpha_sq must be positive")
    kappa = total_phase / (2.0 * alpha_sq)
    cutoff = int(alpha_sq + 12.0 * math.sqrt(alpha_sq) + 30)
    while True:
        n = np.arange(cutoff)
        logfact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, cutoff)))))
        logp = -alpha_sq / 2.0 + 0.5 * n * math.log(alpha_sq) - 0.5 * logfact
        if math.exp(logp[-1]) < amplitude_floor:
            break
        cutoff *= 2
    c = np.exp(logp + 1j * kappa * n.astype(float) ** 2)
    a1 = complex(np.sum(np.conj(c[:-1]) * c[1:] * np.sqrt(n[:-1] + 1.0)))
    a2 = complex(np.sum(np.conj(c[:-2]) * c[2:]
                        * np.sqrt((n[:-2] + 1.0) * (n[:-2] + 2.0))))
    nbar = float(np.sum(np.abs(c) ** 2 * n))
    return a1, a2, nbar


def fock_kerr_variance(alpha_sq: float, total_phase: float) -> KerrVarianceResult:
    """Exact number-basis quadrature extrema after the Kerr unitary."""
    a1, a2, nbar = _kerr_state_moments(alpha_sq, total_phase)
    da2 = a2 - a1 * a1
    dn = nbar - abs(a1) ** 2
    v_min = 1.0 + 2.0 * dn - 2.0 * abs(da2)
    v_max = 1.0 + 2.0 * dn + 2.0 * abs(da2)
    # Var X_theta = 1 + 2 dn + 2 Re(da2 e^{-2 i theta}); minimal when the
    # rotated moment points along -1
    theta_min = 0.5 * (math.pi + float(np.angle(da2)))
    return KerrVarianceResult(float(v_min), float(v_max), theta_min, nbar)


def fock_kerr_variance_curve(alpha_sq: float, total_phase: float,
                             thetas: np.ndarray) -> np.ndarray:
    """Brute-force Var(X_theta) on a theta grid (cross-check for the extrema)."""
    a1, a2, nbar = _kerr_state_moments(alpha_sq, total_phase)
    da2 = a2 - a1 * a1
    dn = nbar - abs(a1) ** 2
    return 1.0 + 2.0 * dn + 2.0 * np.real(da2 * np.exp(-2j * np.asarray(thetas)))


def twa_kerr_variance(alpha_sq: float, total_phase: float, n_samples: int,
                      seed: int = 0) -> KerrVarianceResult:
    """Truncated-Wigner estimate with the same phase-rotation step as the solver.

    Samples a = alpha + vacuum (quadrature variance 1/4 each), rotates each
    by exp(i lam |a|^2) with lam = total_phase / alpha_sq, and reads the
    covariance eigenvalues of (X, P).
    """
    if n_samples < 2:
        raise ParameterError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    a = math.sqrt(alpha_sq) + (rng.standard_normal(n_samples)
                               + 1j * rng.standard_normal(n_samples)) * 0.5
    lam = total_phase / alpha_sq
    a = a * np.exp(1j * lam * (a.real**2 + a.imag**2))
    cov = np.cov(np.vstack([2.0 * a.real, 2.0 * a.imag]), ddof=1)
    evals, vecs = np.linalg.eigh(cov)
    ang = math.atan2(vecs[1, 0], vecs[0, 0])
    nbar = float(np.mean(np.abs(a) ** 2) - 0.5)
    return KerrVarianceResult(float(evals[0]), float(evals[1]), ang, nbar)
