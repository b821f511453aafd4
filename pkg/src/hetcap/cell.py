"""Periodic cell problems and homogenized densities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .grid import Energy, build_periodic_cell
from .integrand import GrowthBounds, HomogenizedTable, Integrand, QuadraticMatrix, ScalarCoefficient, Constant
from .minimize import SolveOptions, minimize

__all__ = ["CellSolution", "solve_cell_problem", "tabulate_fhom", "quadratic_homogenized_matrix"]


@dataclass
class CellSolution:
    xi: np.ndarray
    fhom_value: float
    corrector: np.ndarray
    converged: bool = True


def solve_cell_problem(I: Integrand, xi, n: int = 64, opts: SolveOptions | None = None) -> CellSolution:
    """min over zero-mean periodic phi of the cell average of f(y, xi + grad phi(y))."""
    if n < 8:
        raise InputError("cell resolution must be at least 8")
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if len(xi) != I.d:
        raise InputError("xi has the wrong dimension")
    g = build_periodic_cell(n, I.d)
    if not np.any(xi):
        return CellSolution(xi, 0.0, np.zeros(g.n_nodes))
    res = minimize(Energy(g, I, 1.0, offset=xi), np.zeros(g.n_nodes), opts)
    if not res.converged:
        raise NumericalError(f"cell problem did not converge for xi={xi.tolist()}")
    return CellSolution(xi, res.energy, res.field, res.converged)


def tabulate_fhom(I: Integrand, n_directions: int = 64, n: int = 64, opts: SolveOptions | None = None) -> HomogenizedTable:
    """Homogenized density from cell solves on equi-spaced unit directions (d = 2)."""
    if n_directions < 8:
        raise InputError("need at least 8 directions")
    if I.d != 2:
        raise InputError("direction tables are implemented for d = 2")
    angles = 2 * np.pi * np.arange(n_directions) / n_directions
    values = np.empty(n_directions)
    # quadratic-type densities are even in xi, so opposite directions coincide
    even = isinstance(I, (ScalarCoefficient, QuadraticMatrix, Constant)) and n_directions % 2 == 0
    half = n_directions // 2 if even else n_directions
    for i in range(half):
        values[i] = solve_cell_problem(I, (np.cos(angles[i]), np.sin(angles[i])), n, opts).fhom_value
    if even:
        values[half:] = values[:half]
    return HomogenizedTable(values, GrowthBounds(I.alpha, I.beta), 2, name=f"fhom[{getattr(I, 'name', 'f')}]")


def quadratic_homogenized_matrix(I: Integrand, n: int = 64, opts: SolveOptions | None = None):
    """A_hom by polarization of f_hom at e1, e2, e1 + e2.  Returns ``(A_hom, sqrt_det)``."""
    if I.d != 2 or not isinstance(I, (ScalarCoefficient, QuadraticMatrix, Constant)):
        raise InputError("polarization needs a two-dimensional quadratic model")
    f1 = solve_cell_problem(I, (1.0, 0.0), n, opts).fhom_value
    f2 = solve_cell_problem(I, (0.0, 1.0), n, opts).fhom_value
    f12 = solve_cell_problem(I, (1.0, 1.0), n, opts).fhom_value
    off = 0.5 * (f12 - f1 - f2)
    A = np.array([[f1, off], [off, f2]])
    det = float(np.linalg.det(A))
    if f1 <= 0 or det <= 0:
        raise NumericalError("recovered homogenized matrix is not positive definite; refine the cell grid")
    return A, float(np.sqrt(det))
