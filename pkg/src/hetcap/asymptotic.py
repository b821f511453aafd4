"""Heterogeneous capacities of small balls and the limit constant C(lambda).

The energy scale is |log eps|^{d-1} mu_{eps,delta}, where mu is the minimum
of the oscillating energy over fields equal to 1 on B(z_eps, eps) and 0 on
the boundary of the box Omega.  The predicted limit interpolates between the
frozen capacity density Phi(z) and the homogenized one C_hom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import PolarResolution, chom_estimate, phi_estimate, sigma
from .cell import quadratic_homogenized_matrix, tabulate_fhom
from .errors import InputError, ResolutionError
from .grid import AnnulusSpec, Box, Energy, build_annulus_grid, build_masked_box
from .integrand import Constant, Integrand, QuadraticMatrix, ScalarCoefficient
from .minimize import SolveOptions, minimize

__all__ = [
    "AsymptoticParams",
    "CenterFamily",
    "MuResolution",
    "LawRow",
    "LawReport",
    "scalar_two_well_min",
    "c_lambda",
    "coupled_delta",
    "mu_eps_delta",
    "m_eps_delta",
    "sandwich_bounds",
    "homogenized_far_field",
    "law_sweep",
]


def coupled_delta(eps: float, lam: float) -> float:
    """delta = eps^lambda, or 1/|log eps| when lambda = 0."""
    if not 0 < eps < 1:
        raise InputError("eps must lie in (0, 1)")
    if not 0 <= lam <= 1:
        raise InputError("lambda must lie in [0, 1]")
    return eps**lam if lam > 0 else 1.0 / abs(math.log(eps))


@dataclass(frozen=True)
class AsymptoticParams:
    d: int
    eps: float
    lam: float

    def __post_init__(self):
        if self.d < 2:
            raise InputError("dimension must be at least 2")
        coupled_delta(self.eps, self.lam)

    @property
    def delta(self) -> float:
        return coupled_delta(self.eps, self.lam)

    @property
    def log_eps(self) -> float:
        return abs(math.log(self.eps))


@dataclass(frozen=True)
class CenterFamily:
    """Centres z_eps = delta (z + i_eps) with the lattice offset nearest the domain centre."""

    z: tuple
    clearance: float = 0.1

    def __post_init__(self):
        z = tuple(float(v) for v in np.atleast_1d(self.z))
        if any(not 0 <= v < 1 for v in z):
            raise InputError("anchor z must lie in [0, 1)^d")
        object.__setattr__(self, "z", z)

    def offset(self, omega: Box, delta: float) -> np.ndarray:
        # floor(x + 1/2) keeps ties deterministic
        return np.floor(omega.center / delta - np.array(self.z) + 0.5)

    def realize(self, omega: Box, delta: float) -> np.ndarray:
        if len(self.z) != omega.d:
            raise InputError("anchor and domain dimensions differ")
        zc = delta * (np.array(self.z) + self.offset(omega, delta))
        if not omega.contains(zc) or omega.inradius(zc) < self.clearance:
            raise InputError(f"realized centre {zc.tolist()} violates the clearance {self.clearance}")
        return zc


@dataclass(frozen=True)
class MuResolution:
    """``box``: masked Cartesian grid with spacing h (default min(eps/4, delta/8)).

    ``polar``: log-polar grid centred at z_eps, clipped to the box; once the
    angular spacing exceeds delta/8 the density is replaced by the supplied
    homogenized far field.
    """

    method: str = "box"
    h: float | None = None
    n_angular: int = 256
    opts: SolveOptions | None = None

    def __post_init__(self):
        if self.method not in ("box", "polar"):
            raise InputError("method must be 'box' or 'polar'")
        if self.h is not None and not self.h > 0:
            raise InputError("spacing must be positive")
        if self.n_angular < 8:
            raise InputError("n_angular must be at least 8")


def scalar_two_well_min(a: float, b: float, d: int):
    """Minimizer and minimum of a|1 - x|^d + b|x|^d."""
    if not (a > 0 and b > 0):
        raise InputError("a and b must be positive")
    if d < 2:
        raise InputError("dimension must be at least 2")
    s = (b / a) ** (1.0 / (d - 1)) + 1.0
    return 1.0 / s, b * s ** (1 - d)


def c_lambda(phi: float, chom: float, lam: float, d: int) -> float:
    """phi chom [lam phi^{1/(d-1)} + (1 - lam) chom^{1/(d-1)}]^{1-d}."""
    if not (phi > 0 and chom > 0):
        raise InputError("phi and chom must be positive")
    if not 0 <= lam <= 1:
        raise InputError("lambda must lie in [0, 1]")
    if d < 2:
        raise InputError("dimension must be at least 2")
    if lam == 0:
        return float(phi)
    if lam == 1:
        return float(chom)
    q = 1.0 / (d - 1)
    return phi * chom * (lam * phi**q + (1 - lam) * chom**q) ** (1 - d)


def sandwich_bounds(I: Integrand, omega: Box, z_eps, eps: float):
    """Bounds on |log eps|^{d-1} mu from concentric-ball capacities.

    mu lies between alpha Cap(B_eps, B_out) and beta Cap(B_eps, B_in), with
    B_in, B_out the largest inscribed and smallest enclosing balls of Omega
    around z_eps.
    """
    d = omega.d
    L = abs(math.log(eps))
    r_in, r_out = omega.inradius(z_eps), omega.circumradius(z_eps)
    if r_in <= eps:
        raise InputError("inclusion does not fit in the domain")
    lower = I.alpha * sigma(d) * (L / math.log(r_out / eps)) ** (d - 1)
    upper = I.beta * sigma(d) * (L / math.log(r_in / eps)) ** (d - 1)
    return lower, upper


def homogenized_far_field(I: Integrand, n: int = 64) -> Integrand:
    """x-independent homogenized density: a constant matrix for quadratic d = 2 models, else a table."""
    if getattr(I, "x_independent", False):
        return I
    if I.d == 2 and isinstance(I, (ScalarCoefficient, QuadraticMatrix)):
        A, _ = quadratic_homogenized_matrix(I, n)
        return QuadraticMatrix.constant(A, name="hom")
    return tabulate_fhom(I, 64, n)


def _log_guess(grid, center, eps, r_in):
    rho = np.maximum(grid.radius(center), eps)
    u0 = np.clip(1.0 - np.log(rho / eps) / math.log(r_in / eps), 0.0, 1.0)
    u0[grid.fixed] = grid.values[grid.fixed]
    return u0


def mu_eps_delta(I: Integrand, omega: Box, family: CenterFamily, p: AsymptoticParams,
                 resolution: MuResolution | None = None, far_field: Integrand | None = None) -> float:
    """Minimum energy with u = 1 on B(z_eps, eps) and u = 0 on the boundary of omega."""
    res = resolution or MuResolution()
    if I.d != p.d or omega.d != p.d:
        raise InputError("dimensions of integrand, domain and parameters differ")
    eps, delta = p.eps, p.delta
    z_eps = family.realize(omega, delta)
    r_in = omega.inradius(z_eps)
    if eps >= r_in:
        raise InputError("inclusion does not fit in the domain")
    if res.method == "box":
        h = res.h if res.h is not None else min(eps / 4, delta / 8)
        if eps < 4 * h * (1 - 1e-12):
            raise ResolutionError(f"eps={eps} is not resolvable at spacing {h} (need eps >= 4h)")
        g = build_masked_box(omega, h, [(z_eps, eps, 1.0)], outer_value=0.0)
        energy = Energy(g, I, delta)
    else:
        if p.d != 2:
            raise InputError("the polar method is two-dimensional")
        n_ang = res.n_angular
        r_out = omega.circumradius(z_eps)
        polar = PolarResolution(n_ang / (2 * math.pi), n_ang)
        g = build_annulus_grid(AnnulusSpec(tuple(z_eps), eps, r_out), polar.rings(eps, r_out), n_ang, clip_box=omega)
        switch = delta * n_ang / (16 * math.pi)
        if switch < r_out and not getattr(I, "x_independent", False):
            far = far_field if far_field is not None else homogenized_far_field(I)
            energy = Energy(g, I, delta, far_field=far, switch_radius=switch, center=z_eps)
        else:
            energy = Energy(g, I, delta)
    return minimize(energy, _log_guess(g, z_eps, eps, r_in), res.opts).energy


def m_eps_delta(I: Integrand, omega: Box, candidate_z, p: AsymptoticParams, resolution=None,
                clearance: float = 0.1, far_field=None):
    """Minimum of mu over a finite list of anchors; returns ``(best_z, value)`` (first on ties)."""
    candidate_z = [tuple(np.atleast_1d(z).astype(float)) for z in candidate_z]
    if not candidate_z:
        raise InputError("candidate list is empty")
    best_z, best = None, math.inf
    for z in candidate_z:
        v = mu_eps_delta(I, omega, CenterFamily(z, clearance), p, resolution, far_field)
        if v < best:
            best_z, best = z, v
    return best_z, best


@dataclass
class LawRow:
    eps: float
    delta: float
    lam: float
    mu: float
    rescaled: float
    lower: float
    upper: float


@dataclass
class LawReport:
    lam: float
    rows: list
    phi: float
    chom: float
    prediction: float
    sandwiched: bool
    approaching: bool
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "PASS" if self.sandwiched and self.approaching else "FAIL"


def law_sweep(I: Integrand, omega: Box, family: CenterFamily, lam: float, eps_schedule,
              resolution: MuResolution | None = None, phi_hat: float | None = None,
              chom_hat: float | None = None, far_field: Integrand | None = None) -> LawReport:
    """|log eps|^{d-1} mu along a decreasing eps schedule with delta coupled to eps."""
    eps_schedule = [float(e) for e in eps_schedule]
    if not eps_schedule or any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise InputError("eps schedule must be nonempty and strictly decreasing")
    d = I.d
    if far_field is None and not getattr(I, "x_independent", False):
        far_field = homogenized_far_field(I)
    if phi_hat is None:
        phi_hat = phi_estimate(I, family.z).estimate if d == 2 else sigma(d) * _frozen_scale(I, family.z)
    if chom_hat is None:
        if getattr(I, "x_independent", False):
            chom_hat = phi_hat
        else:
            chom_hat = chom_estimate(far_field).estimate
    prediction = c_lambda(phi_hat, chom_hat, lam, d)
    rows = []
    for eps in eps_schedule:
        p = AsymptoticParams(d, eps, lam)
        mu = mu_eps_delta(I, omega, family, p, resolution, far_field)
        z_eps = family.realize(omega, p.delta)
        lower, upper = sandwich_bounds(I, omega, z_eps, eps)
        rows.append(LawRow(eps, p.delta, lam, mu, p.log_eps ** (d - 1) * mu, lower, upper))
    sandwiched = all(r.lower <= r.rescaled <= r.upper for r in rows)
    approaching = len(rows) >= 2 and abs(rows[-1].rescaled - prediction) < abs(rows[0].rescaled - prediction)
    return LawReport(lam, rows, phi_hat, chom_hat, prediction, sandwiched, approaching)


def _frozen_scale(I: Integrand, z) -> float:
    if isinstance(I, Constant):
        return I.c
    if isinstance(I, ScalarCoefficient):
        return float(I.coefficient(np.atleast_2d(z))[0])
    raise InputError("frozen capacities in d >= 3 are available for scalar models only")
