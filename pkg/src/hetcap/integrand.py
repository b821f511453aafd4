"""Periodic, d-homogeneous energy densities f(x, xi) and their xi-gradients.

Every model is evaluated in vectorized form on arrays of points ``x`` of shape
``(n, d)`` and gradients ``xi`` of shape ``(n, d)``.  For repeated evaluation
on a fixed set of quadrature points a model is *bound* once to those points
(``Integrand.bind``), which samples the coefficient a single time and returns
a density object acting on ``xi`` only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InputError

__all__ = [
    "GrowthBounds",
    "Integrand",
    "ScalarCoefficient",
    "QuadraticMatrix",
    "HomogenizedTable",
    "Constant",
    "FrozenIntegrand",
    "ScaledIntegrand",
    "AxiomReport",
    "evaluate",
    "gradient_xi",
    "verify_axioms",
    "wrap",
    "constant",
    "sinusoidal",
    "laminate",
    "checkerboard",
    "PRESETS",
]


def wrap(x):
    """Reduce coordinates modulo 1 into [0, 1)."""
    x = np.asarray(x, dtype=float)
    y = x - np.floor(x)
    # x - floor(x) rounds to 1.0 for tiny negative x
    y[y >= 1.0] = 0.0
    return y


@dataclass(frozen=True)
class GrowthBounds:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta >= self.alpha and np.isfinite(self.beta)):
            raise InputError(f"growth bounds need 0 < alpha <= beta, got {self.alpha}, {self.beta}")


# --------------------------------------------------------------------------
# bound densities: f(x_c, .) for a fixed array of quadrature points x_c


class _PowerDensity:
    """c(x)|xi|^d with c sampled per point (or a single scalar)."""

    def __init__(self, coef, d):
        self.coef = coef
        self.d = d
        self.quadratic = d == 2

    def value(self, xi):
        r2 = np.einsum("ij,ij->i", xi, xi)
        if self.d == 2:
            return self.coef * r2
        return self.coef * r2 ** (0.5 * self.d)

    def grad(self, xi):
        if self.d == 2:
            return (2.0 * self.coef) * xi if np.ndim(self.coef) == 0 else (2.0 * self.coef)[:, None] * xi
        r = np.sqrt(np.einsum("ij,ij->i", xi, xi))
        s = self.coef * self.d * r ** (self.d - 2)
        return s[:, None] * xi

    def curvature(self, xi, xp):
        """Second derivative of t -> value(xi + t xp) at t = 0, per point."""
        pp = np.einsum("ij,ij->i", xp, xp)
        if self.d == 2:
            return 2.0 * self.coef * pp
        r2 = np.einsum("ij,ij->i", xi, xi)
        xq = np.einsum("ij,ij->i", xi, xp)
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = np.where(r2 > 0, xq**2 / r2, 0.0)
        return self.coef * self.d * r2 ** (0.5 * self.d - 1) * (pp + (self.d - 2) * radial)

    def subset(self, idx):
        if np.ndim(self.coef) == 0:
            return self
        return _PowerDensity(self.coef[idx], self.d)


class _MatrixDensity:
    """<A(x) xi, xi> with A symmetric, shape (n, 2, 2) or (2, 2)."""

    quadratic = True

    def __init__(self, A):
        self.A = A

    def _apply(self, xi):
        if self.A.ndim == 2:
            return xi @ self.A.T
        return np.einsum("ijk,ik->ij", self.A, xi)

    def value(self, xi):
        return np.einsum("ij,ij->i", self._apply(xi), xi)

    def grad(self, xi):
        return 2.0 * self._apply(xi)

    def curvature(self, xi, xp):
        return 2.0 * self.value(xp)

    def subset(self, idx):
        if self.A.ndim == 2:
            return self
        return _MatrixDensity(self.A[idx])


class _GaugeDensity:
    """(n_s . xi)^d where n_s is the facet normal of the sector containing xi."""

    quadratic = False

    def __init__(self, table: "HomogenizedTable"):
        self.t = table
        self.d = table.d

    def _facet(self, xi):
        theta = np.arctan2(xi[:, 1], xi[:, 0])
        k = np.floor(theta / self.t.step).astype(np.int64) % self.t.n
        return self.t.normals[k]

    def value(self, xi):
        s = np.maximum(np.einsum("ij,ij->i", self._facet(xi), xi), 0.0)
        return s**self.d

    def grad(self, xi):
        n = self._facet(xi)
        s = np.maximum(np.einsum("ij,ij->i", n, xi), 0.0)
        return (self.d * s ** (self.d - 1))[:, None] * n

    def curvature(self, xi, xp):
        n = self._facet(xi)
        s = np.maximum(np.einsum("ij,ij->i", n, xi), 0.0)
        return self.d * (self.d - 1) * s ** (self.d - 2) * np.einsum("ij,ij->i", n, xp) ** 2

    def subset(self, idx):
        return self


class _ScaledDensity:
    def __init__(self, base, t):
        self.base = base
        self.t = t
        self.quadratic = base.quadratic

    def value(self, xi):
        return self.t * self.base.value(xi)

    def grad(self, xi):
        return self.t * self.base.grad(xi)

    def curvature(self, xi, xp):
        return self.t * self.base.curvature(xi, xp)

    def subset(self, idx):
        return _ScaledDensity(self.base.subset(idx), self.t)


class SplitDensity:
    """Two densities glued along a boolean mask over the quadrature points."""

    def __init__(self, mask, inner, outer):
        self.mask = np.asarray(mask, dtype=bool)
        self.inner = inner
        self.outer = outer
        self.quadratic = inner.quadratic and outer.quadratic
        self._i = np.flatnonzero(self.mask)
        self._o = np.flatnonzero(~self.mask)

    def value(self, xi):
        out = np.empty(len(xi))
        out[self._i] = self.inner.value(xi[self._i])
        out[self._o] = self.outer.value(xi[self._o])
        return out

    def grad(self, xi):
        out = np.empty_like(xi)
        out[self._i] = self.inner.grad(xi[self._i])
        out[self._o] = self.outer.grad(xi[self._o])
        return out

    def curvature(self, xi, xp):
        out = np.empty(len(xi))
        out[self._i] = self.inner.curvature(xi[self._i], xp[self._i])
        out[self._o] = self.outer.curvature(xi[self._o], xp[self._o])
        return out

    def subset(self, idx):
        idx = np.asarray(idx)
        m = self.mask[idx]
        pos = np.cumsum(self.mask) - 1
        neg = np.cumsum(~self.mask) - 1
        return SplitDensity(
            m,
            self.inner.subset(pos[idx[m]]),
            self.outer.subset(neg[idx[~m]]),
        )


# --------------------------------------------------------------------------
# models


class Integrand:
    """Base class.  Subclasses implement ``bind``."""

    d: int
    bounds: GrowthBounds
    x_independent = False

    @property
    def alpha(self):
        return self.bounds.alpha

    @property
    def beta(self):
        return self.bounds.beta

    def bind(self, points):
        raise NotImplementedError

    def _check(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        single = xi.ndim == 1 and x.ndim == 1
        x = np.atleast_2d(x)
        xi = np.atleast_2d(xi)
        if x.shape[1] != self.d or xi.shape[1] != self.d:
            raise InputError(f"expected points and vectors of dimension {self.d}")
        if len(x) == 1 and len(xi) > 1:
            x = np.repeat(x, len(xi), axis=0)
        if len(xi) == 1 and len(x) > 1:
            xi = np.repeat(xi, len(x), axis=0)
        if len(x) != len(xi):
            raise InputError("point and vector arrays differ in length")
        return x, xi, single

    def evaluate(self, x, xi):
        x, xi, single = self._check(x, xi)
        out = self.bind(x).value(xi)
        out = np.broadcast_to(out, (len(xi),)).copy()
        return float(out[0]) if single else out

    def gradient_xi(self, x, xi):
        x, xi, single = self._check(x, xi)
        out = self.bind(x).grad(xi)
        return out[0] if single else out

    def frozen(self, z) -> "FrozenIntegrand":
        return FrozenIntegrand(self, z)

    def scaled(self, t: float) -> "ScaledIntegrand":
        return ScaledIntegrand(self, t)


@dataclass(frozen=True, eq=False)
class ScalarCoefficient(Integrand):
    """f(x, xi) = a(x)|xi|^d with ``a`` a sampler on [0,1)^d."""

    a: Callable
    d: int = 2
    bounds: GrowthBounds = field(default_factory=lambda: GrowthBounds(1.0, 1.0))
    name: str = "scalar"

    def coefficient(self, x):
        return np.asarray(self.a(wrap(np.atleast_2d(x))), dtype=float)

    def bind(self, points):
        return _PowerDensity(self.coefficient(points), self.d)


@dataclass(frozen=True, eq=False)
class QuadraticMatrix(Integrand):
    """f(x, xi) = <A(x) xi, xi> in d = 2, ``A`` a sampler returning (n, 2, 2)."""

    A: Callable
    bounds: GrowthBounds = field(default_factory=lambda: GrowthBounds(1.0, 1.0))
    d: int = 2
    name: str = "matrix"

    def __post_init__(self):
        if self.d != 2:
            raise InputError("QuadraticMatrix models are two-dimensional")

    @classmethod
    def constant(cls, A, name="matrix") -> "QuadraticMatrix":
        A = np.asarray(A, dtype=float)
        A = 0.5 * (A + A.T)
        w = np.linalg.eigvalsh(A)
        if w[0] <= 0:
            raise InputError("matrix is not positive definite")
        out = cls(lambda y: np.broadcast_to(A, (len(y), 2, 2)), GrowthBounds(w[0], w[1]), name=name)
        object.__setattr__(out, "_const", A)
        object.__setattr__(out, "x_independent", True)
        return out

    def matrix(self, x):
        A = np.asarray(self.A(wrap(np.atleast_2d(x))), dtype=float)
        return 0.5 * (A + np.swapaxes(A, -1, -2))

    def bind(self, points):
        const = getattr(self, "_const", None)
        if const is not None:
            return _MatrixDensity(const)
        return _MatrixDensity(self.matrix(points))


class HomogenizedTable(Integrand):
    """x-independent density given by its values on equi-spaced unit directions (d = 2).

    Between tabulated directions the unit sublevel set {f <= 1} is taken to be
    the polygon through the tabulated boundary points T_i^{-1/d} e(theta_i),
    so f(xi) = (n_i . xi)^d on sector i.  For samples of a convex function the
    polygon is convex and so is the interpolant.
    """

    x_independent = True

    def __init__(self, values, bounds: GrowthBounds, d: int = 2, name: str = "fhom"):
        if d != 2:
            raise InputError("direction tables are implemented for d = 2")
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or len(values) < 8 or np.any(values <= 0) or not np.all(np.isfinite(values)):
            raise InputError("table needs at least 8 positive finite values")
        self.d = d
        self.bounds = bounds
        self.name = name
        self.values = values
        self.n = len(values)
        self.step = 2 * np.pi / self.n
        self.angles = self.step * np.arange(self.n)
        r = values ** (-1.0 / d)
        P = r[:, None] * np.column_stack([np.cos(self.angles), np.sin(self.angles)])
        Q = np.roll(P, -1, axis=0)
        det = P[:, 0] * Q[:, 1] - P[:, 1] * Q[:, 0]
        self.normals = np.column_stack([(Q[:, 1] - P[:, 1]) / det, (P[:, 0] - Q[:, 0]) / det])
        self.vertices = P
        reach = self.normals @ P.T
        if np.max(reach) > 1.0 + 1e-9:
            raise InputError("direction table is not convex (midpoint test failed)")

    def bind(self, points):
        return _GaugeDensity(self)

    def table(self, theta):
        """Value of f on the unit vector at angle ``theta``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        xi = np.column_stack([np.cos(theta), np.sin(theta)])
        return _GaugeDensity(self).value(xi)


@dataclass(frozen=True, eq=False)
class Constant(Integrand):
    """f(x, xi) = c|xi|^d."""

    c: float = 1.0
    d: int = 2
    name: str = "constant"
    x_independent = True

    def __post_init__(self):
        if not self.c > 0:
            raise InputError("constant coefficient must be positive")
        if self.d < 2:
            raise InputError("dimension must be at least 2")

    @property
    def bounds(self):
        return GrowthBounds(self.c, self.c)

    def bind(self, points):
        return _PowerDensity(float(self.c), self.d)


class FrozenIntegrand(Integrand):
    """xi -> f(z, xi), constant in x."""

    x_independent = True

    def __init__(self, base: Integrand, z):
        z = np.asarray(z, dtype=float).reshape(-1)
        if len(z) != base.d:
            raise InputError("freezing point has the wrong dimension")
        self.base = base
        self.z = z
        self.d = base.d
        self.bounds = base.bounds

    def bind(self, points):
        dens = self.base.bind(self.z[None, :])
        if isinstance(dens, _PowerDensity) and np.ndim(dens.coef) == 1:
            return _PowerDensity(float(dens.coef[0]), dens.d)
        if isinstance(dens, _MatrixDensity) and dens.A.ndim == 3:
            return _MatrixDensity(dens.A[0])
        return dens


class ScaledIntegrand(Integrand):
    """t * f."""

    def __init__(self, base: Integrand, t: float):
        if not t > 0:
            raise InputError("scale factor must be positive")
        self.base = base
        self.t = float(t)
        self.d = base.d
        self.bounds = GrowthBounds(t * base.alpha, t * base.beta)
        self.x_independent = base.x_independent

    def bind(self, points):
        return _ScaledDensity(self.base.bind(points), self.t)


def evaluate(I: Integrand, x, xi):
    return I.evaluate(x, xi)


def gradient_xi(I: Integrand, x, xi):
    return I.gradient_xi(x, xi)


# --------------------------------------------------------------------------
# axiom checks


@dataclass
class AxiomReport:
    n_samples: int
    periodicity_defect: float
    homogeneity_defect: float
    growth_violations: list
    convexity_violations: list

    @property
    def ok(self) -> bool:
        return (
            self.periodicity_defect <= 1e-10
            and self.homogeneity_defect <= 1e-10
            and not self.growth_violations
            and not self.convexity_violations
        )


def verify_axioms(I: Integrand, n_samples: int = 1000, seed: int = 0) -> AxiomReport:
    """Sample (P1)-(P3) and midpoint convexity on random points and directions."""
    if n_samples < 1:
        raise InputError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    d = I.d
    x = rng.uniform(-3.0, 3.0, (n_samples, d))
    xi = rng.normal(size=(n_samples, d)) * np.exp(rng.uniform(-2, 2, (n_samples, 1)))
    eta = rng.normal(size=(n_samples, d)) * np.exp(rng.uniform(-2, 2, (n_samples, 1)))
    t = np.exp(rng.uniform(-3, 3, n_samples))

    fx = I.evaluate(x, xi)
    per = 0.0
    for k in range(d):
        shifted = x.copy()
        shifted[:, k] += 1.0
        per = max(per, float(np.max(np.abs(I.evaluate(shifted, xi) - fx) / (1.0 + fx))))

    ftx = I.evaluate(x, t[:, None] * xi)
    hom = float(np.max(np.abs(ftx - t**d * fx) / (1.0 + t**d * fx)))

    r = np.linalg.norm(xi, axis=1) ** d
    tol = 1e-12 * (1.0 + r)
    growth = np.flatnonzero((fx < I.alpha * r - tol) | (fx > I.beta * r + tol)).tolist()

    fm = I.evaluate(x, 0.5 * (xi + eta))
    fa = 0.5 * (fx + I.evaluate(x, eta))
    conv = np.flatnonzero(fm > fa + 1e-12 * (1.0 + fa)).tolist()
    return AxiomReport(n_samples, per, hom, growth, conv)


# --------------------------------------------------------------------------
# presets


def constant(c: float = 1.0, d: int = 2) -> Constant:
    return Constant(c, d)


def sinusoidal(d: int = 2, alpha: float = 1.0, beta: float = 3.0) -> ScalarCoefficient:
    """a(x) = 2 + sin(2 pi x_1), range [1, 3]."""
    return ScalarCoefficient(lambda y: 2.0 + np.sin(2 * np.pi * y[:, 0]), d, GrowthBounds(alpha, beta), "sinusoidal")


def laminate(low: float = 1.0, high: float = 4.0, d: int = 2) -> ScalarCoefficient:
    """a = low for y_1 < 1/2 and high otherwise."""
    return ScalarCoefficient(
        lambda y: np.where(y[:, 0] < 0.5, low, high), d, GrowthBounds(min(low, high), max(low, high)), "laminate"
    )


def checkerboard(low: float = 1.0, high: float = 4.0, d: int = 2) -> ScalarCoefficient:
    """a = low on half-cells with an even count of coordinates >= 1/2."""
    return ScalarCoefficient(
        lambda y: np.where(np.sum(y >= 0.5, axis=1) % 2 == 0, low, high),
        d,
        GrowthBounds(min(low, high), max(low, high)),
        "checkerboard",
    )


PRESETS = {
    "constant": constant,
    "sinusoidal": sinusoidal,
    "laminate": laminate,
    "checkerboard": checkerboard,
}
