"""Constrained minimization of the discrete energy.

Nonlinear conjugate gradients (Polak-Ribiere+) over the free nodes.  For
quadratic densities the line search is exact; otherwise the minimum along
the search direction is located by bracketing and a safeguarded secant
iteration on the directional derivative, followed by a descent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError
from .grid import Energy, Grid
from .integrand import Integrand

__all__ = ["SolveOptions", "MinimizeResult", "minimize", "minimize_energy", "clamp01"]

_CURVATURE_FLOOR = 1e-14
_WINDOW = 5
_WOLFE = 0.1


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int | None = None
    grad_tol: float | None = None
    energy_tol: float = 1e-12
    clamp01: bool = False

    def __post_init__(self):
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise InputError("grad_tol must be positive")
        if not self.energy_tol > 0:
            raise InputError("energy_tol must be positive")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise InputError("max_iterations must be nonnegative")


@dataclass
class MinimizeResult:
    field: np.ndarray
    energy: float
    grad_norm: float
    iterations: int
    converged: bool
    grad_tol: float = 0.0
    history: list = field(default_factory=list, repr=False)


def clamp01(u) -> np.ndarray:
    """Truncate nodal values to [0, 1]."""
    return np.clip(np.asarray(u, dtype=float), 0.0, 1.0)


def _line_search(energy: Energy, xi, xp, dphi0: float, t0: float) -> float:
    """Approximate minimizer of t -> E(xi + t xp) for t > 0, given phi'(0) < 0."""

    def dphi(t):
        v = energy.directional(xi + t * xp, xp)
        if not math.isfinite(v):
            raise NumericalError("non-finite directional derivative in line search")
        return v

    lo, dlo = 0.0, dphi0
    hi = dhi = None
    t = t0
    for _ in range(80):
        dt = dphi(t)
        if abs(dt) <= _WOLFE * abs(dphi0):
            return t
        if dt >= 0:
            hi, dhi = t, dt
            break
        lo, dlo = t, dt
        t *= 4.0
    if hi is None:
        return lo
    if dhi == 0:
        return hi
    side = 0
    for _ in range(60):
        t = lo - dlo * (hi - lo) / (dhi - dlo)
        if not lo < t < hi:
            t = 0.5 * (lo + hi)
        dt = dphi(t)
        if abs(dt) <= _WOLFE * abs(dphi0):
            return t
        if dt < 0:
            lo, dlo = t, dt
            if side == -1:
                dhi *= 0.5
            side = -1
        else:
            hi, dhi = t, dt
            if side == 1:
                dlo *= 0.5
            side = 1
        if hi - lo <= 1e-15 * hi:
            break
    return lo if lo > 0 else 0.5 * hi


def minimize(energy: Energy, u0, opts: SolveOptions | None = None) -> MinimizeResult:
    opts = opts or SolveOptions()
    grid = energy.grid
    u = np.array(u0, dtype=float, copy=True)
    if u.shape != (grid.n_nodes,):
        raise InputError("initial field does not live on this grid")
    if not np.all(np.isfinite(u)):
        raise InputError("initial field has non-finite values")
    if not np.array_equal(u[grid.fixed], grid.values[grid.fixed]):
        raise InputError("initial field violates the Dirichlet constraints")
    if opts.clamp01:
        u = clamp01(u)
        u[grid.fixed] = grid.values[grid.fixed]
    if grid.zero_mean:
        u -= u.mean()

    n_free = int(np.count_nonzero(grid.free))
    max_iter = opts.max_iterations if opts.max_iterations is not None else int(20 * math.sqrt(n_free) + 500)

    xi = energy.xi(u)
    E = energy.value_from_xi(xi)
    g = energy.grad_from_xi(xi)
    gg = float(g @ g)
    gnorm = math.sqrt(gg)
    tol = opts.grad_tol if opts.grad_tol is not None else 1e-8 * (gnorm + 1.0)
    history = [E]
    p = -g
    step = 1.0
    converged = False
    it = 0
    while True:
        if gnorm <= tol:
            converged = True
            break
        if len(history) > _WINDOW and history[-1 - _WINDOW] - history[-1] <= opts.energy_tol * abs(history[-1]):
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        gp = float(g @ p)
        if gp >= 0:
            p, gp = -g, -gg
        xp = energy.dxi(p)
        pp = float(p @ p)
        if energy.quadratic:
            curv = 2.0 * energy.quad_form(xp)
            if curv <= _CURVATURE_FLOOR * pp and not np.array_equal(p, -g):
                p, gp = -g, -gg
                xp = energy.dxi(p)
                curv = 2.0 * energy.quad_form(xp)
            if curv <= 0:
                break
            t = -gp / curv
        else:
            curv = energy.curvature(xi, xp)
            if curv <= _CURVATURE_FLOOR * pp and not np.array_equal(p, -g):
                p, gp = -g, -gg
                xp = energy.dxi(p)
                curv = energy.curvature(xi, xp)
            t0 = -gp / curv if curv > _CURVATURE_FLOOR * pp else step
            t = _line_search(energy, xi, xp, gp, t0)
        E_new = energy.value_from_xi(xi + t * xp)
        if not math.isfinite(E_new):
            raise NumericalError("non-finite energy during minimization")
        shrink = 0
        while E_new > E and shrink < 60:
            t *= 0.5
            E_new = energy.value_from_xi(xi + t * xp)
            shrink += 1
        if E_new > E:
            break
        u += t * p
        if it % 50 == 0:
            xi = energy.xi(u)
        else:
            xi = xi + t * xp
        step = t
        E = E_new
        g_new = energy.grad_from_xi(xi)
        gg_new = float(g_new @ g_new)
        beta = max(0.0, float(g_new @ (g_new - g)) / gg) if gg > 0 else 0.0
        p = -g_new + beta * p
        g, gg = g_new, gg_new
        gnorm = math.sqrt(gg)
        history.append(E)

    if opts.clamp01:
        uc = clamp01(u)
        uc[grid.fixed] = grid.values[grid.fixed]
        Ec = energy.value(uc)
        if Ec <= E:
            u, E = uc, Ec
    u[grid.fixed] = grid.values[grid.fixed]
    E = energy.value(u)
    return MinimizeResult(u, E, gnorm, it, converged, tol, history)


def minimize_energy(g: Grid, I: Integrand, delta: float, u0=None, opts: SolveOptions | None = None,
                    **energy_kwargs) -> MinimizeResult:
    """Minimize the discrete energy on ``g`` starting from ``u0`` (default: prescribed values, zero elsewhere)."""
    energy = Energy(g, I, delta, **energy_kwargs)
    if u0 is None:
        u0 = g.initial_field()
    return minimize(energy, u0, opts)
