"""Structured grids, nodal fields and the discrete energy.

Three grid kinds share one representation:

* ``polar``    log-spaced rings around a centre (d = 2), periodic in angle;
* ``periodic`` the unit cell [0,1)^d with wrap-around adjacency;
* ``box``      an axis-aligned Cartesian box with masked Dirichlet nodes.

Each cell has 2^d corner nodes and one quadrature point (the cell centre).
The discrete gradient at the centre is a fixed linear combination of the
corner values, stored as ``weights[c, k, j]`` so that
``grad_k(c) = sum_j weights[c, k, j] * u[cells[c, j]]``.

Fields are plain float arrays of nodal values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ResolutionError
from .integrand import Integrand, SplitDensity

__all__ = [
    "Box",
    "AnnulusSpec",
    "Grid",
    "Energy",
    "build_annulus_grid",
    "build_periodic_cell",
    "build_masked_box",
    "box_window",
    "discrete_energy",
    "energy_gradient",
    "dump_grid",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box (lo, hi)."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or len(lo) < 2 or any(b <= a for a, b in zip(lo, hi)):
            raise InputError("box needs lo < hi in every coordinate, d >= 2")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, d: int = 2) -> "Box":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def measure(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    def as_arrays(self):
        return np.array(self.lo), np.array(self.hi)

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p > np.array(self.lo)) and np.all(p < np.array(self.hi)))

    def inradius(self, p) -> float:
        """Distance from an interior point to the boundary."""
        p = np.asarray(p, dtype=float)
        return float(np.min(np.minimum(p - np.array(self.lo), np.array(self.hi) - p)))

    def circumradius(self, p) -> float:
        """Distance from p to the farthest corner."""
        p = np.asarray(p, dtype=float)
        far = np.maximum(np.abs(p - np.array(self.lo)), np.abs(np.array(self.hi) - p))
        return float(np.linalg.norm(far))


@dataclass(frozen=True)
class AnnulusSpec:
    z: tuple
    r: float
    R: float

    def __post_init__(self):
        if not (0 < self.r < self.R) or not np.isfinite(self.R):
            raise InputError(f"annulus needs 0 < r < R, got r={self.r}, R={self.R}")


@dataclass(eq=False)
class Grid:
    kind: str
    d: int
    nodes: np.ndarray
    cells: np.ndarray
    weights: np.ndarray
    centers: np.ndarray
    measures: np.ndarray
    fixed: np.ndarray
    values: np.ndarray
    zero_mean: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def free(self) -> np.ndarray:
        return ~self.fixed

    def domain_measure(self) -> float:
        return float(np.sum(self.measures))

    def initial_field(self, fill: float = 0.0) -> np.ndarray:
        u = np.full(self.n_nodes, float(fill))
        u[self.fixed] = self.values[self.fixed]
        return u

    def is_feasible(self, u) -> bool:
        u = np.asarray(u)
        return u.shape == (self.n_nodes,) and bool(np.all(np.isfinite(u))) and np.array_equal(
            u[self.fixed], self.values[self.fixed]
        )

    def _w(self, cells):
        if cells is None or self.weights.shape[0] == 1:
            return self.weights
        return self.weights[cells]

    def cell_gradients(self, u, cells=None) -> np.ndarray:
        """Discrete gradient at the centres of ``cells`` (all cells by default)."""
        idx = self.cells if cells is None else self.cells[cells]
        return np.einsum("ckj,cj->ck", self._w(cells), u[idx])

    def scatter(self, q, cells=None) -> np.ndarray:
        """Transpose of ``cell_gradients``: nodal vector from per-cell covectors ``q``."""
        idx = self.cells if cells is None else self.cells[cells]
        contrib = np.einsum("ckj,ck->cj", self._w(cells), q)
        return np.bincount(idx.ravel(), weights=contrib.ravel(), minlength=self.n_nodes)

    def cell_values(self, u, cells=None) -> np.ndarray:
        """Multilinear interpolant at the cell centres (mean of the corners)."""
        idx = self.cells if cells is None else self.cells[cells]
        return u[idx].mean(axis=1)

    def cells_touching(self, nodes_mask) -> np.ndarray:
        return np.flatnonzero(np.any(np.asarray(nodes_mask)[self.cells], axis=1))

    def gradient_matrix(self):
        """Sparse matrix D with (D u)[k * n_cells + c] = grad_k u at cell c."""
        from scipy import sparse

        W = np.broadcast_to(self.weights, (self.n_cells, self.d, self.cells.shape[1]))
        rows = (np.arange(self.d)[None, :, None] * self.n_cells + np.arange(self.n_cells)[:, None, None])
        rows = np.broadcast_to(rows, W.shape)
        cols = np.broadcast_to(self.cells[:, None, :], W.shape)
        return sparse.csr_matrix(
            (W.ravel(), (rows.ravel(), cols.ravel())), shape=(self.d * self.n_cells, self.n_nodes)
        )

    def radius(self, center) -> np.ndarray:
        return np.linalg.norm(self.nodes - np.asarray(center, dtype=float)[None, :], axis=1)

    def shell_nodes(self, center, radius) -> np.ndarray:
        """Nodes forming the discrete sphere of the given radius around ``center``.

        Polar grids centred at ``center`` use the single ring nearest the
        radius; Cartesian grids use the nodes within half a spacing of it.
        """
        rho = self.radius(center)
        if self.kind == "polar" and np.allclose(self.meta["center"], center):
            radii = self.meta["radii"]
            i = int(np.argmin(np.abs(radii - radius)))
            ring = np.zeros(self.n_nodes, dtype=bool)
            na = self.meta["n_angular"]
            ring[i * na:(i + 1) * na] = True
            return ring
        h = float(np.max(self.meta["h"]))
        return np.abs(rho - radius) <= 0.5 * h


# --------------------------------------------------------------------------
# builders


def build_annulus_grid(spec: AnnulusSpec, n_radial: int, n_angular: int, clip_box=None,
                       inner_value: float = 1.0, outer_value: float = 0.0) -> Grid:
    """Polar grid on B(z, R) minus B(z, r) with log-spaced rings.

    Ring 0 carries ``inner_value`` and the last ring ``outer_value``.  When
    ``clip_box = (lo, hi)`` is given, nodes outside the box are also fixed to
    ``outer_value`` (staircase approximation of the box boundary).
    """
    if n_radial < 4 or n_angular < 8:
        raise InputError("polar grids need n_radial >= 4 and n_angular >= 8")
    z = np.asarray(spec.z, dtype=float).reshape(-1)
    if len(z) != 2:
        raise InputError("polar grids are two-dimensional")
    h = np.log(spec.R / spec.r) / (n_radial - 1)
    radii = spec.r * np.exp(h * np.arange(n_radial))
    radii[0], radii[-1] = spec.r, spec.R
    dth = 2 * np.pi / n_angular
    theta = dth * np.arange(n_angular)

    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    nodes = z[None, :] + np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])

    i = np.arange(n_radial - 1)[:, None]
    j = np.arange(n_angular)[None, :]
    jn = (j + 1) % n_angular
    cells = np.stack(
        [i * n_angular + j, (i + 1) * n_angular + j, i * n_angular + jn, (i + 1) * n_angular + jn], axis=-1
    ).reshape(-1, 4)

    r0 = np.repeat(radii[:-1], n_angular)
    r1 = np.repeat(radii[1:], n_angular)
    rc = 0.5 * (r0 + r1)
    dr = r1 - r0
    tc = np.tile(theta + 0.5 * dth, n_radial - 1)
    c, s = np.cos(tc), np.sin(tc)
    g_rho = np.array([-1.0, 1.0, -1.0, 1.0])[None, :] / (2 * dr[:, None])
    g_tan = np.array([-1.0, -1.0, 1.0, 1.0])[None, :] / (2 * rc[:, None] * dth)
    weights = np.stack([c[:, None] * g_rho - s[:, None] * g_tan, s[:, None] * g_rho + c[:, None] * g_tan], axis=1)
    centers = z[None, :] + np.column_stack([rc * c, rc * s])
    measures = 0.5 * (r1**2 - r0**2) * dth

    fixed = np.zeros(len(nodes), dtype=bool)
    values = np.zeros(len(nodes))
    fixed[:n_angular] = True
    values[:n_angular] = inner_value
    fixed[-n_angular:] = True
    values[-n_angular:] = outer_value
    if clip_box is not None:
        lo, hi = clip_box.as_arrays() if isinstance(clip_box, Box) else (np.asarray(b, dtype=float) for b in clip_box)
        outside = np.any((nodes < lo) | (nodes > hi), axis=1)
        outside[:n_angular] = False
        fixed |= outside
        values[outside] = outer_value
    meta = dict(center=z, radii=radii, n_radial=n_radial, n_angular=n_angular, h_log=h, r=spec.r, R=spec.R,
                h=np.array([np.max(dr), spec.R * dth]))
    return Grid("polar", 2, nodes, cells, weights, centers, measures, fixed, values, False, meta)


def _corner_offsets(d):
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)


def _cartesian_weights(d, h):
    off = _corner_offsets(d)
    h = np.broadcast_to(np.asarray(h, dtype=float), (d,))
    w = (2.0 * off.T - 1.0) / (2 ** (d - 1) * h[:, None])
    return w[None, :, :]


def build_periodic_cell(n: int, d: int = 2) -> Grid:
    """n^d nodes on [0,1)^d with wrap-around adjacency and a zero-mean constraint."""
    if n < 4:
        raise InputError("periodic cell needs n >= 4")
    if d < 2:
        raise InputError("dimension must be at least 2")
    h = 1.0 / n
    idx = np.array(list(itertools.product(range(n), repeat=d)), dtype=np.int64)
    nodes = idx * h
    off = _corner_offsets(d)
    corners = (idx[:, None, :] + off[None, :, :]) % n
    cells = np.ravel_multi_index(tuple(np.moveaxis(corners, -1, 0)), (n,) * d)
    centers = (idx + 0.5) * h
    measures = np.full(len(idx), h**d)
    fixed = np.zeros(len(idx), dtype=bool)
    meta = dict(n=n, h=np.full(d, h), shape=(n,) * d)
    return Grid("periodic", d, nodes, cells, _cartesian_weights(d, h), centers, measures, fixed,
                np.zeros(len(idx)), True, meta)


def build_masked_box(box, h: float, dirichlet_balls=(), outer_value=None) -> Grid:
    """Cartesian grid on ``box = (lo, hi)`` with spacing close to ``h``.

    Nodes inside a listed ball ``(center, radius, value)`` are fixed to the
    ball's value; boundary nodes are fixed to ``outer_value`` when given.
    Balls may straddle the box boundary but must meet it.
    """
    lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in (box.as_arrays() if isinstance(box, Box) else box))
    d = len(lo)
    if d < 2 or len(hi) != d or np.any(hi <= lo):
        raise InputError("box needs lo < hi in every coordinate, d >= 2")
    if not h > 0:
        raise InputError("spacing must be positive")
    counts = np.maximum(np.round((hi - lo) / h).astype(np.int64), 2)
    hv = (hi - lo) / counts
    hmax = float(np.max(hv))
    shape = tuple(int(c) + 1 for c in counts)

    axes = [lo[k] + hv[k] * np.arange(shape[k]) for k in range(d)]
    for k in range(d):
        axes[k][-1] = hi[k]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([m.ravel() for m in mesh])

    lower = np.array(list(itertools.product(*[range(c) for c in counts])), dtype=np.int64)
    off = _corner_offsets(d)
    corners = lower[:, None, :] + off[None, :, :]
    cells = np.ravel_multi_index(tuple(np.moveaxis(corners, -1, 0)), shape)
    centers = lo[None, :] + (lower + 0.5) * hv[None, :]
    measures = np.full(len(lower), float(np.prod(hv)))

    fixed = np.zeros(len(nodes), dtype=bool)
    values = np.zeros(len(nodes))
    if outer_value is not None:
        ijk = np.array(np.unravel_index(np.arange(len(nodes)), shape)).T
        bnd = np.any((ijk == 0) | (ijk == np.array(shape) - 1), axis=1)
        fixed[bnd] = True
        values[bnd] = float(outer_value)
    for center, radius, value in dirichlet_balls:
        center = np.asarray(center, dtype=float).reshape(-1)
        if radius < 2 * hmax:
            raise ResolutionError(f"ball of radius {radius} is not resolvable at spacing {hmax} (need radius >= 2h)")
        gap = np.linalg.norm(np.maximum(0.0, np.maximum(lo - center, center - hi)))
        if gap >= radius:
            raise InputError("ball does not meet the box")
        inside = np.linalg.norm(nodes - center[None, :], axis=1) <= radius
        fixed[inside] = True
        values[inside] = float(value)
    meta = dict(lo=lo, hi=hi, h=hv, shape=shape, balls=list(dirichlet_balls), outer_value=outer_value)
    return Grid("box", d, nodes, cells, _cartesian_weights(d, hv), centers, measures, fixed, values, False, meta)


def box_window(grid: Grid, center, radius):
    """Sub-box of a box grid covering B(center, radius), with identical cells.

    Returns ``(sub, node_map, cell_map)`` where ``node_map`` maps sub-grid
    nodes to parent nodes and ``cell_map`` sub-grid cells to parent cells.
    All sub-grid nodes are free; callers set constraints.
    """
    if grid.kind != "box":
        raise InputError("windows are defined for box grids")
    lo, hv, shape = grid.meta["lo"], grid.meta["h"], grid.meta["shape"]
    center = np.asarray(center, dtype=float)
    a = np.clip(np.floor((center - radius - lo) / hv).astype(np.int64) - 1, 0, np.array(shape) - 2)
    b = np.clip(np.ceil((center + radius - lo) / hv).astype(np.int64) + 1, a + 1, np.array(shape) - 1)
    ranges = [np.arange(a[k], b[k] + 1) for k in range(grid.d)]
    sub_shape = tuple(len(r) for r in ranges)
    node_map = np.ravel_multi_index(tuple(m.ravel() for m in np.meshgrid(*ranges, indexing="ij")), shape)
    lower = np.array(list(itertools.product(*[range(s - 1) for s in sub_shape])), dtype=np.int64)
    off = _corner_offsets(grid.d)
    cells = np.ravel_multi_index(tuple(np.moveaxis(lower[:, None, :] + off[None, :, :], -1, 0)), sub_shape)
    parent_lower = lower + a[None, :]
    cell_counts = np.array(shape) - 1
    cell_map = np.ravel_multi_index(tuple(parent_lower.T), tuple(cell_counts))
    sub = Grid(
        "box", grid.d, grid.nodes[node_map], cells, grid.weights, grid.centers[cell_map], grid.measures[cell_map],
        np.zeros(len(node_map), dtype=bool), np.zeros(len(node_map)), False,
        dict(lo=grid.nodes[node_map[0]], hi=grid.nodes[node_map[-1]], h=hv, shape=sub_shape),
    )
    return sub, node_map, cell_map


# --------------------------------------------------------------------------
# discrete energy


class Energy:
    """E(u) = sum_c |c| f(x_c / delta, offset + grad_h u(x_c)).

    ``far_field``: optional x-independent integrand used on cells farther
    than ``switch_radius`` from ``center`` (homogenized far field).
    """

    def __init__(self, grid: Grid, integrand: Integrand, delta: float = 1.0, offset=None,
                 far_field: Integrand | None = None, switch_radius: float | None = None, center=None):
        if integrand.d != grid.d:
            raise InputError("integrand and grid dimensions differ")
        if not delta > 0:
            raise InputError("delta must be positive")
        self.grid = grid
        self.integrand = integrand
        self.delta = float(delta)
        self.offset = None if offset is None else np.asarray(offset, dtype=float).reshape(1, -1)
        pts = grid.centers / self.delta
        if far_field is not None:
            mask = np.linalg.norm(grid.centers - np.asarray(center, dtype=float)[None, :], axis=1) <= switch_radius
            self.near = mask
            self.density = SplitDensity(mask, integrand.bind(pts[mask]), far_field.bind(pts[~mask]))
        else:
            self.near = None
            self.density = integrand.bind(pts)
        self.quadratic = bool(self.density.quadratic)
        self.m = grid.measures

    def xi(self, u, cells=None):
        g = self.grid.cell_gradients(u, cells)
        return g if self.offset is None else g + self.offset

    def dxi(self, p):
        return self.grid.cell_gradients(p)

    def value_from_xi(self, xi, cells=None):
        if cells is None:
            return float(np.sum(self.m * self.density.value(xi)))
        return float(np.sum(self.m[cells] * self.density.subset(cells).value(xi)))

    def grad_from_xi(self, xi):
        q = self.m[:, None] * self.density.grad(xi)
        g = self.grid.scatter(q)
        g[self.grid.fixed] = 0.0
        if self.grid.zero_mean:
            g -= g.mean()
        return g

    def directional(self, xi, xp) -> float:
        return float(np.sum(self.m * np.einsum("ij,ij->i", self.density.grad(xi), xp)))

    def curvature(self, xi, xp) -> float:
        """Second derivative of t -> E at xi + t xp (one-sided on kinks)."""
        return float(np.sum(self.m * self.density.curvature(xi, xp)))

    def quad_form(self, xp) -> float:
        """Homogeneous part sum_c |c| f(xp_c); for quadratic densities E(u+tp) = E(u) + t g.p + t^2 quad_form."""
        return float(np.sum(self.m * self.density.value(xp)))

    def value(self, u, cells=None) -> float:
        return self.value_from_xi(self.xi(u, cells), cells)

    def gradient(self, u) -> np.ndarray:
        return self.grad_from_xi(self.xi(u))

    def cell_energies(self, u) -> np.ndarray:
        return self.m * self.density.value(self.xi(u))


def discrete_energy(g: Grid, I: Integrand, delta: float, u) -> float:
    u = np.asarray(u, dtype=float)
    if u.shape != (g.n_nodes,):
        raise InputError("field does not live on this grid")
    return Energy(g, I, delta).value(u)


def energy_gradient(g: Grid, I: Integrand, delta: float, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (g.n_nodes,):
        raise InputError("field does not live on this grid")
    return Energy(g, I, delta).gradient(u)


def dump_grid(g: Grid, stream, u=None) -> None:
    """Plain-text dump: a header line, then one node per line (coords, fixed flag, prescribed value[, u])."""
    stream.write(f"# kind={g.kind} d={g.d} nodes={g.n_nodes} cells={g.n_cells} measure={g.domain_measure():.17g}\n")
    for n in range(g.n_nodes):
        cols = [f"{x:.17g}" for x in g.nodes[n]] + [str(int(g.fixed[n])), f"{g.values[n]:.17g}"]
        if u is not None:
            cols.append(f"{u[n]:.17g}")
        stream.write(" ".join(cols) + "\n")
