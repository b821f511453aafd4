"""Annulus capacities and their logarithmic rescaling limits.

``frozen_annulus_minimum`` solves the Dirichlet problem u = 1 on |x| = 1,
u = 0 on |x| = R for an x-independent density on a log-polar grid.  The
rescaled minima (log R)^{d-1} m_R are extrapolated in the variable 1/log R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .grid import AnnulusSpec, Energy, build_annulus_grid
from .integrand import Integrand
from .minimize import SolveOptions, minimize

__all__ = [
    "PolarResolution",
    "LogExtrapolation",
    "DEFAULT_SCHEDULE",
    "sigma",
    "analytic_capacity",
    "frozen_annulus_minimum",
    "fit_log_extrapolation",
    "rescaled_minima",
    "phi_estimate",
    "chom_estimate",
    "log_profile_upper_bound",
]

DEFAULT_SCHEDULE = (math.e**2, math.e**3, math.e**4)
LOW_CONFIDENCE = 0.01


@dataclass(frozen=True)
class PolarResolution:
    """Rings per unit of log-radius and angular node count."""

    per_log: float = 32.0
    n_angular: int = 64

    def rings(self, r: float, R: float) -> int:
        return max(4, int(round(self.per_log * math.log(R / r))) + 1)

    def refined(self, factor: int = 2) -> "PolarResolution":
        return PolarResolution(self.per_log * factor, self.n_angular * factor)


@dataclass
class LogExtrapolation:
    samples: list
    estimate: float
    slope: float
    residual: float
    low_confidence: bool

    @property
    def spread(self) -> float:
        v = [s[1] for s in self.samples]
        return max(v) - min(v)


def sigma(d: int) -> float:
    """Surface measure of the unit sphere in R^d."""
    if int(d) != d or d < 2:
        raise InputError("dimension must be an integer >= 2")
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def analytic_capacity(d: int, r: float, R: float) -> float:
    """d-capacity of B(0, r) in B(0, R) for |xi|^d."""
    if not (0 < r < R):
        raise InputError(f"need 0 < r < R, got r={r}, R={R}")
    return sigma(d) * math.log(R / r) ** (1 - d)


def _require_x_independent(F: Integrand):
    if not getattr(F, "x_independent", False):
        raise InputError("annulus minima need an x-independent integrand (freeze it first)")
    if F.d != 2:
        raise InputError("annulus minima are computed on polar grids (d = 2)")


def frozen_annulus_minimum(F: Integrand, R: float, resolution: PolarResolution | None = None,
                           opts: SolveOptions | None = None, r: float = 1.0) -> float:
    """Minimum of the energy of F over fields equal to 1 on |x| = r and 0 on |x| = R."""
    _require_x_independent(F)
    if not R > r:
        raise InputError("outer radius must exceed the inner radius")
    res = resolution or PolarResolution()
    g = build_annulus_grid(AnnulusSpec((0.0, 0.0), r, R), res.rings(r, R), res.n_angular)
    u0 = 1.0 - np.log(g.radius((0.0, 0.0)) / r) / math.log(R / r)
    u0[g.fixed] = g.values[g.fixed]
    return minimize(Energy(g, F, 1.0), u0, opts).energy


def fit_log_extrapolation(samples) -> LogExtrapolation:
    """Least-squares fit of rescaled = estimate + slope / log R."""
    samples = [(float(R), float(v)) for R, v in samples]
    if len(samples) < 2:
        raise InputError("extrapolation needs at least two samples")
    Rs = np.array([s[0] for s in samples])
    if np.any(np.diff(Rs) <= 0) or np.any(Rs <= 1):
        raise InputError("schedule must be strictly increasing and > 1")
    x = 1.0 / np.log(Rs)
    y = np.array([s[1] for s in samples])
    A = np.column_stack([np.ones_like(x), x])
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    est = float(coef[0])
    if not (math.isfinite(est) and est > 0):
        raise InputError("extrapolated limit is not positive; refine the schedule")
    return LogExtrapolation(samples, est, float(coef[1]), resid, resid > LOW_CONFIDENCE * est)


def rescaled_minima(F: Integrand, R_schedule, resolution=None, opts=None):
    R_schedule = [float(R) for R in R_schedule]
    if any(R <= 1 for R in R_schedule) or any(b <= a for a, b in zip(R_schedule, R_schedule[1:])):
        raise InputError("schedule must be strictly increasing and > 1")
    out = []
    for R in R_schedule:
        m = frozen_annulus_minimum(F, R, resolution, opts)
        out.append((R, m, math.log(R) ** (F.d - 1) * m))
    return out


def phi_estimate(I: Integrand, z, R_schedule=DEFAULT_SCHEDULE, resolution=None, opts=None) -> LogExtrapolation:
    """Extrapolated (log R)^{d-1} m_R for the density frozen at z."""
    rows = rescaled_minima(I.frozen(z), R_schedule, resolution, opts)
    return fit_log_extrapolation([(R, v) for R, _, v in rows])


def chom_estimate(fhom: Integrand, R_schedule=DEFAULT_SCHEDULE, resolution=None, opts=None) -> LogExtrapolation:
    """Extrapolated (log R)^{d-1} m_R for an x-independent (homogenized) density."""
    rows = rescaled_minima(fhom, R_schedule, resolution, opts)
    return fit_log_extrapolation([(R, v) for R, _, v in rows])


def _sphere_average(F: Integrand, n: int) -> float:
    """Mean of F(-omega) over unit vectors omega."""
    d = F.d
    if d == 2:
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        omega = np.column_stack([np.cos(th), np.sin(th)])
    else:
        omega = np.random.default_rng(0).normal(size=(n, d))
        omega /= np.linalg.norm(omega, axis=1, keepdims=True)
    return float(np.mean(F.bind(np.zeros((1, d))).value(-omega)))


def log_profile_upper_bound(F: Integrand, R: float, n_angles: int = 4096) -> float:
    """Energy of 1 - log|x| / log R on B(0,R) minus B(0,1).

    The profile's gradient is -x / (|x|^2 log R), so by homogeneity the energy
    factors into (log R)^{1-d} times the integral of F(-omega) over the sphere.
    """
    _require_x_independent(F)
    if not R > 1:
        raise InputError("R must exceed 1")
    return math.log(R) ** (1 - F.d) * sigma(F.d) * _sphere_average(F, n_angles)
