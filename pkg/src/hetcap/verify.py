"""Quick invariant checks used by the ``verify`` command."""

from __future__ import annotations

import math

import numpy as np

from .asymptotic import c_lambda, scalar_two_well_min
from .capacity import PolarResolution, analytic_capacity, frozen_annulus_minimum, log_profile_upper_bound
from .cell import solve_cell_problem
from .grid import AnnulusSpec, Box, Energy, build_annulus_grid, build_masked_box
from .integrand import Constant, Integrand, ScalarCoefficient, laminate, verify_axioms
from .minimize import clamp01
from .modification import ModificationParams, modify_to_constant_trace, smooth_annulus_field

__all__ = ["run_checks"]


def _test_grid(d: int):
    if d == 2:
        return build_annulus_grid(AnnulusSpec((0.0, 0.0), 1.0, 8.0), 24, 32)
    return build_masked_box(Box.unit(d), 1 / 6, outer_value=0.0)


def run_checks(I: Integrand, seed: int = 0, samples: int = 200):
    """Return a list of (name, passed, value) triples."""
    rng = np.random.default_rng(seed)
    d = I.d
    out = []

    rep = verify_axioms(I, max(samples, 10), seed)
    out.append(("axioms", rep.ok, max(rep.periodicity_defect, rep.homogeneity_defect)))

    g = _test_grid(d)
    E = Energy(g, I, 0.37)
    u = g.initial_field() + rng.random(g.n_nodes) * g.free
    v = rng.normal(size=g.n_nodes) * g.free
    h = 1e-6
    fd = (E.value(u + h * v) - E.value(u - h * v)) / (2 * h)
    an = float(E.gradient(u) @ v)
    err = abs(fd - an) / max(abs(an), 1e-300)
    out.append(("gradient_fd", err <= 1e-5, err))
    out.append(("gradient_fixed_zero", bool(np.all(E.gradient(u)[g.fixed] == 0.0)), 0.0))

    hom = abs(E.value(2.0 * u) - 2.0**d * E.value(u)) / E.value(u)
    out.append(("energy_homogeneity", hom <= 1e-12, hom))
    out.append(("energy_constant_zero", E.value(np.full(g.n_nodes, 0.7)) == 0.0, 0.0))

    phi = np.exp(rng.uniform(-3, 3, samples))
    chom = np.exp(rng.uniform(-3, 3, samples))
    dims = rng.integers(2, 6, samples)
    lam = rng.random(samples)
    end = max(max(abs(c_lambda(p, c, 0.0, k) - p) / p, abs(c_lambda(p, c, 1.0, k) - c) / c)
              for p, c, k in zip(phi, chom, dims))
    out.append(("c_lambda_endpoints", end <= 1e-15, end))
    homog = max(abs(c_lambda(3 * p, 3 * c, l, k) - 3 * c_lambda(p, c, l, k)) / c_lambda(p, c, l, k)
                for p, c, l, k in zip(phi, chom, lam, dims))
    out.append(("c_lambda_homogeneity", homog <= 1e-12, homog))
    between = all(min(p, c) * (1 - 1e-12) <= c_lambda(p, c, l, k) <= max(p, c) * (1 + 1e-12)
                  for p, c, l, k in zip(phi, chom, lam, dims))
    out.append(("c_lambda_between", between, 0.0))

    a = np.exp(rng.uniform(-2, 2, samples))
    b = np.exp(rng.uniform(-2, 2, samples))
    tw = 0.0
    for ai, bi, k in zip(a, b, dims):
        x, val = scalar_two_well_min(ai, bi, int(k))
        tw = max(tw, abs(ai * abs(1 - x) ** k + bi * abs(x) ** k - val) / val)
    out.append(("two_well_closed_form", tw <= 1e-12, tw))

    if d == 2:
        m = frozen_annulus_minimum(Constant(1.0, 2), math.e, PolarResolution(32, 64))
        cap = abs(m / analytic_capacity(2, 1, math.e) - 1)
        out.append(("annulus_capacity", cap <= 0.01, cap))
        F = I.frozen(np.zeros(2))
        mR = frozen_annulus_minimum(F, math.e**2, PolarResolution(16, 64))
        ub = log_profile_upper_bound(F, math.e**2)
        out.append(("log_profile_upper_bound", mR <= ub * (1 + 1e-3), ub - mR))
        cell = solve_cell_problem(laminate(), (1.0, 0.0), 16).fhom_value
        out.append(("laminate_cell", abs(cell / 1.6 - 1) <= 5e-3, cell))

        if isinstance(I, (ScalarCoefficient, Constant)):
            sq = build_masked_box(Box.unit(2), 1 / 16, outer_value=0.0)
            Es = Energy(sq, I, 0.3)
            w = sq.initial_field() + rng.normal(0.5, 0.8, sq.n_nodes) * sq.free
            wc = clamp01(w)
            wc[sq.fixed] = sq.values[sq.fixed]
            out.append(("clamp01_monotone", Es.value(wc) <= Es.value(w), Es.value(w) - Es.value(wc)))

        ga = build_annulus_grid(AnnulusSpec((0.0, 0.0), 1.0, 64.0), 73, 64)
        p = ModificationParams(1.0, 64.0, 4, 1.0)
        f = smooth_annulus_field(ga, rng)
        res = modify_to_constant_trace(ga, f, I, 4.0, p)
        lo, _, hi = p.shell(res.chosen_j)
        rho = ga.radius((0.0, 0.0))
        local = bool(np.all(res.field[(rho <= lo) | (rho >= hi)] == f[(rho <= lo) | (rho >= hi)]))
        trace = bool(np.all(res.field[res.ring] == res.trace_value))
        out.append(("modification_locality", local, 0.0))
        out.append(("modification_trace", trace, 0.0))
    return out
