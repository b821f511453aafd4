"""Constant-trace surgery on dyadic annuli.

Given a field u on an annulus around z, the dyadic radii eta 2^s split the
annulus into overlapping shells A_k.  On each shell u is blended towards its
mean with a tent cutoff peaking on the middle sphere, which makes the field
constant there.  The shell with the smallest energy increase is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import PolarResolution
from .errors import InputError, ParameterError
from .grid import AnnulusSpec, Energy, Grid, build_annulus_grid
from .integrand import Integrand

__all__ = [
    "ModificationParams",
    "ModificationResult",
    "dyadic_cutoff",
    "modify_to_constant_trace",
    "poincare_wirtinger_lower_estimate",
    "analytic_constant",
    "smooth_annulus_field",
]

_EDGE = 1e-12


@dataclass(frozen=True)
class ModificationParams:
    eta: float
    R: float
    N: int
    r: float

    def __post_init__(self):
        if not (self.eta > 0 and self.R > 0 and self.r > 0):
            raise ParameterError("eta, R and r must be positive")
        S = self.S
        if S < 3:
            raise ParameterError(f"annulus too thin: S={S} < 3")
        if not 2 <= self.N < S:
            raise ParameterError(f"need 2 <= N < S, got N={self.N}, S={S}")
        if self.r > self.eta * 2.0 ** (S - self.N):
            raise ParameterError("inner radius exceeds eta 2^(S-N)")

    @property
    def S(self) -> int:
        s = max(0, int(math.floor(math.log2(self.R / self.eta))))
        while self.eta * 2.0 ** (s + 1) <= self.R:
            s += 1
        while s > 0 and self.eta * 2.0**s > self.R:
            s -= 1
        return s

    def base_radius(self, k: int) -> float:
        """Inner radius eta 2^{S-N+k-1} of shell k."""
        if not 1 <= k <= self.N - 1:
            raise ParameterError(f"shell index {k} outside 1..{self.N - 1}")
        return self.eta * 2.0 ** (self.S - self.N + k - 1)

    def shell(self, j: int):
        """(inner, middle, outer) radii of the shell labelled j = N - k."""
        a = self.base_radius(self.N - j)
        return a, 2 * a, 4 * a


@dataclass
class ModificationResult:
    field: np.ndarray
    chosen_j: int
    trace_value: float
    energy_ratio: float
    energy_before: float
    energy_after: float
    increments: list = field(default_factory=list)
    ring: np.ndarray | None = field(default=None, repr=False)


def dyadic_cutoff(k: int, p: ModificationParams):
    """Tent profile: 0 up to a, rising to 1 at 2a, back to 0 at 4a, with a = eta 2^{S-N+k-1}."""
    a = p.base_radius(k)

    def profile(rho):
        rho = np.asarray(rho, dtype=float)
        up = (rho - a) / a
        down = (4 * a - rho) / (2 * a)
        return np.clip(np.minimum(up, down), 0.0, 1.0)

    return profile


def analytic_constant(alpha: float, beta: float, d: int, pw_ratio: float) -> float:
    """beta 2^{d-1} (1 + P^d) / alpha, with ``pw_ratio`` an estimate of P^d."""
    return beta * 2 ** (d - 1) * (1 + pw_ratio) / alpha


def modify_to_constant_trace(grid: Grid, u, I: Integrand, delta: float, p: ModificationParams,
                             center=None) -> ModificationResult:
    """Blend u towards its shell average on the cheapest dyadic shell."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_nodes,):
        raise InputError("field does not live on this grid")
    if center is None:
        center = grid.meta.get("center", np.zeros(grid.d))
    center = np.asarray(center, dtype=float)
    rho_nodes = grid.radius(center)
    rho_cells = np.linalg.norm(grid.centers - center[None, :], axis=1)
    if np.min(rho_nodes) > p.eta * 2.0 ** (p.S - p.N) * (1 + 1e-9) or np.max(rho_nodes) < p.eta * 2.0**p.S * (1 - 1e-9):
        raise ParameterError("grid does not cover the dyadic shells")
    energy = Energy(grid, I, delta)
    E_u = energy.value(u)

    best = None
    increments = []
    for j in range(1, p.N):
        k = p.N - j
        a, mid, outer = p.shell(j)
        phi = dyadic_cutoff(k, p)(rho_nodes)
        phi[(rho_nodes <= a * (1 + _EDGE)) | (rho_nodes >= outer * (1 - _EDGE))] = 0.0
        ring = grid.shell_nodes(center, mid)
        phi[ring] = 1.0
        if np.any(grid.fixed & (phi > 0)):
            raise ParameterError("shell overlaps constrained nodes")
        shell_cells = np.flatnonzero((rho_cells > a) & (rho_cells < outer))
        w = grid.measures[shell_cells]
        # averaging deviations from a reference value keeps constant fields exact
        ref = float(u[np.flatnonzero(ring)[0]])
        mean = ref + float(np.sum(w * (grid.cell_values(u, shell_cells) - ref)) / np.sum(w))
        v = u + phi * (mean - u)
        v[ring] = mean
        touched = grid.cells_touching(phi > 0)
        dE = energy.value(v, touched) - energy.value(u, touched)
        increments.append(dE)
        if best is None or dE < best[0]:
            best = (dE, j, v, mean, ring)
    dE, j, v, mean, ring = best
    E_v = energy.value(v)
    ratio = E_v / E_u if E_u > 0 else 1.0
    return ModificationResult(v, j, mean, ratio, E_u, E_v, increments, ring)


def smooth_annulus_field(grid: Grid, rng: np.random.Generator, modes: int = 3, center=None) -> np.ndarray:
    """Random low-mode field in (log radius, angle) coordinates."""
    center = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    rel = grid.nodes - center[None, :]
    rho = np.linalg.norm(rel, axis=1)
    th = np.arctan2(rel[:, 1], rel[:, 0])
    lo, hi = np.log(rho.min()), np.log(rho.max())
    s = (np.log(rho) - lo) / (hi - lo)
    u = np.zeros(grid.n_nodes)
    for l in range(modes + 1):
        radial = np.cos(l * np.pi * s)
        for m in range(modes + 1):
            c = rng.normal(size=2) / (1 + l + m)
            u += radial * (c[0] * np.cos(m * th) + (c[1] * np.sin(m * th) if m else 0.0))
    return u


def _pw_ratio(grid: Grid, u, d: int) -> float:
    w = grid.measures
    uc = grid.cell_values(u)
    mean = np.sum(w * uc) / np.sum(w)
    num = np.sum(w * np.abs(uc - mean) ** d)
    xi = grid.cell_gradients(u)
    den = np.sum(w * np.einsum("ij,ij->i", xi, xi) ** (0.5 * d))
    return float(num / den)


def poincare_wirtinger_lower_estimate(d: int = 2, n_samples: int = 64, resolution: PolarResolution | None = None,
                                      seed: int = 0) -> float:
    """Running maximum of ||u - mean||_d^d / ||grad u||_d^d over sampled fields on B(0,4) minus B(0,1).

    The first sample is u = x_1; sample k >= 1 is drawn from its own seeded stream,
    so the estimate is nondecreasing in ``n_samples``.
    """
    if d != 2:
        raise InputError("the reference annulus is gridded in polar form (d = 2)")
    if n_samples < 1:
        raise InputError("n_samples must be positive")
    res = resolution or PolarResolution()
    g = build_annulus_grid(AnnulusSpec((0.0, 0.0), 1.0, 4.0), res.rings(1.0, 4.0), res.n_angular)
    best = _pw_ratio(g, g.nodes[:, 0], d)
    for k in range(1, n_samples):
        u = smooth_annulus_field(g, np.random.default_rng([seed, k]))
        xi = g.cell_gradients(u)
        if np.max(np.abs(xi)) <= 1e-12:
            continue
        best = max(best, _pw_ratio(g, u, d))
    return best
