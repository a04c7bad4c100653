"""Benchmark problems and their exact/reference solutions.

Each constructor returns a fully populated Problem: domain, initial
data (as a spatial profile times an angular shape, so both the moment
solver and the Legendre-coefficient reference solver can ingest it
exactly), material, boundary conditions, and default end time.

Exact solutions: the free-streaming Riemann problem has
I(z, t, mu) = I_init(z - c mu t, mu), integrated adaptively with a
split at mu = z/(ct); the anti-diffusive steady flow has the
three-region exponential formulas evaluated verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import eval_legendre, roots_legendre

from .errors import UnknownProblem
from .solver import BoundaryCondition, EnergyLaw, Material, quartic_energy_law

PROBLEM_NAMES = ("riemann", "continuous_beam", "two_beam", "gaussian",
                 "su_olson", "antidiffusive")

#: positive floor for E0 where a benchmark starts from (near-)vacuum
VACUUM_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# angular shapes
# ---------------------------------------------------------------------------


class IsotropicShape:
    """S(mu) = 1/2: unit zeroth moment."""

    def moments(self, N):
        k = np.arange(N + 1)
        return np.where(k % 2 == 0, 1.0 / (k + 1.0), 0.0)

    def legendre(self, N):
        u = np.zeros(N + 1)
        u[0] = 0.5
        return u


class DeltaShape:
    """S(mu) = sum_i w_i delta(mu - mu_i)."""

    def __init__(self, weights, mus):
        self.weights = np.asarray(weights, dtype=float)
        self.mus = np.asarray(mus, dtype=float)

    def moments(self, N):
        k = np.arange(N + 1)[:, None]
        return (self.weights * self.mus**k).sum(axis=1)

    def legendre(self, N):
        k = np.arange(N + 1)[:, None]
        return ((2 * k + 1) / 2.0 * self.weights * eval_legendre(k, self.mus)).sum(axis=1)


class SmoothShape:
    """S(mu) given by a callable, integrated with 128-node Gauss-Legendre."""

    def __init__(self, fn):
        self.fn = fn
        self._x, self._w = roots_legendre(128)

    def moments(self, N):
        vals = self.fn(self._x)
        k = np.arange(N + 1)[:, None]
        return (self._w * self._x**k * vals).sum(axis=1)

    def legendre(self, N):
        vals = self.fn(self._x)
        k = np.arange(N + 1)[:, None]
        return ((2 * k + 1) / 2.0 * self._w * eval_legendre(k, self._x) * vals).sum(axis=1)


@dataclass(frozen=True)
class Problem:
    """A benchmark: domain, separable initial data, material, boundaries."""

    name: str
    z_left: float
    z_right: float
    spatial: callable            # z -> amplitude multiplying the angular shape
    angular: object              # IsotropicShape / DeltaShape / SmoothShape
    material: Material
    bc_left: BoundaryCondition
    bc_right: BoundaryCondition
    t_end: float | None = None
    steady: bool = False
    initial_temperature: callable | None = None

    def initial_moments(self, z, N):
        prof = np.asarray(self.spatial(np.asarray(z, dtype=float)), dtype=float)
        return np.outer(self.angular.moments(N), prof)

    def initial_legendre(self, z, N):
        prof = np.asarray(self.spatial(np.asarray(z, dtype=float)), dtype=float)
        return np.outer(self.angular.legendre(N), prof)

    def initial_energy(self, z):
        z = np.asarray(z, dtype=float)
        law = self.material.energy_law
        if self.initial_temperature is not None:
            T = np.asarray(self.initial_temperature(z), dtype=float)
        elif self.material.fixed_temperature is not None:
            T = np.asarray(self.material.fixed_temperature(z), dtype=float)
        else:
            T = np.zeros_like(z)
        e = law.e_of_T(T) if law is not None else np.zeros_like(z)
        return e, T


def _const(v):
    return lambda z, T=None: np.full_like(np.asarray(z, dtype=float), float(v))


def _zero_source(z):
    return np.zeros_like(np.asarray(z, dtype=float))


# ---------------------------------------------------------------------------
# the strongly anisotropic Riemann shape
# ---------------------------------------------------------------------------


def riemann_shape_unnormalized(mu):
    return (1.0 - 0.08 * mu - 0.85 * mu**2) ** -4.0


def riemann_weight_norm():
    """w0 with int I0 dmu = a c: inverse zeroth moment of the raw shape."""
    x, w = roots_legendre(128)
    return 1.0 / float((w * riemann_shape_unnormalized(x)).sum())


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def make_problem(name, *, a=1.0, c=1.0, t_end=None, z_left=None, z_right=None):
    """Build one of the benchmark problems, with optional overrides."""
    ac = a * c
    if name == "riemann":
        w0 = riemann_weight_norm()
        shape = SmoothShape(lambda mu: w0 * riemann_shape_unnormalized(mu))
        return Problem(
            name=name,
            z_left=-0.5 if z_left is None else z_left,
            z_right=0.5 if z_right is None else z_right,
            spatial=lambda z: np.where(z <= 0.0, 2.0 * ac, ac),
            angular=shape,
            material=Material(_const(0.0), _const(0.0), _zero_source, a, c),
            bc_left=BoundaryCondition("infinite"),
            bc_right=BoundaryCondition("infinite"),
            t_end=0.1 if t_end is None else t_end,
        )
    if name == "continuous_beam":
        # piecewise-linear ramp joining 6*I0 to 4*I0 (continuous at both knees)
        def prof(z):
            return 0.5 * ac * np.clip(5.0 - 10.0 * z, 4.0, 6.0)

        shape = DeltaShape([0.1, 0.9], [0.0, 1.0])
        return Problem(
            name=name,
            z_left=-0.5 if z_left is None else z_left,
            z_right=0.5 if z_right is None else z_right,
            spatial=prof,
            angular=shape,
            material=Material(_const(0.0), _const(0.0), _zero_source, a, c),
            bc_left=BoundaryCondition("infinite"),
            bc_right=BoundaryCondition("infinite"),
            t_end=0.1 if t_end is None else t_end,
        )
    if name == "two_beam":
        return Problem(
            name=name,
            z_left=0.0 if z_left is None else z_left,
            z_right=1.0 if z_right is None else z_right,
            spatial=lambda z: np.full_like(z, 2.0 * VACUUM_FLOOR * ac),
            angular=IsotropicShape(),
            material=Material(_const(2.0), _const(0.0), _zero_source, a, c),
            bc_left=BoundaryCondition("inflow", 0.5 * ac),
            bc_right=BoundaryCondition("inflow", 0.5 * ac),
            t_end=t_end,
            steady=True,
        )
    if name == "gaussian":
        tend = 1.0 if t_end is None else t_end
        L = tend * c + 1.0  # no energy reaches the boundaries
        theta = 1.0 / 100.0

        def prof(z):
            return 2.0 * ac / np.sqrt(2.0 * np.pi * theta) * np.exp(-(z**2) / (2.0 * theta))

        return Problem(
            name=name,
            z_left=-L if z_left is None else z_left,
            z_right=L if z_right is None else z_right,
            spatial=prof,
            angular=IsotropicShape(),
            material=Material(_const(0.0), _const(1.0), _zero_source, a, c),
            bc_left=BoundaryCondition("vacuum"),
            bc_right=BoundaryCondition("vacuum"),
            t_end=tend,
        )
    if name == "su_olson":
        def src(z):
            z = np.asarray(z, dtype=float)
            return np.where((z >= 0.0) & (z <= 0.5), ac, 0.0)

        return Problem(
            name=name,
            z_left=0.0 if z_left is None else z_left,
            z_right=30.0 if z_right is None else z_right,
            spatial=lambda z: np.full_like(z, 2.0 * VACUUM_FLOOR * ac),
            angular=IsotropicShape(),
            material=Material(_const(1.0), _const(0.0), src, a, c,
                              energy_law=quartic_energy_law(a)),
            bc_left=BoundaryCondition("reflective"),
            bc_right=BoundaryCondition("vacuum"),
            t_end=10.0 if t_end is None else t_end,
            initial_temperature=lambda z: np.zeros_like(z),
        )
    if name == "antidiffusive":
        lo, hi, z0 = 0.275, 0.1, 0.1

        def level(z):
            z = np.asarray(z, dtype=float)
            return np.where(z < 0.0, lo, np.where(z <= z0, 1.0, hi))

        # the printed region temperatures are equilibrium intensities:
        # the per-direction emission must equal sigma_a * level, i.e.
        # a c T^4 = 2 * (ac * level)
        def Tfix(z):
            return (2.0 * level(z)) ** 0.25

        return Problem(
            name=name,
            z_left=-2.0 if z_left is None else z_left,
            z_right=2.1 if z_right is None else z_right,
            spatial=lambda z: 2.0 * ac * level(z),
            angular=IsotropicShape(),
            material=Material(_const(1.0), _const(0.0), _zero_source, a, c,
                              fixed_temperature=Tfix),
            bc_left=BoundaryCondition("inflow", lo * ac),
            bc_right=BoundaryCondition("inflow", hi * ac),
            t_end=t_end,
            steady=True,
        )
    raise UnknownProblem(name)


# ---------------------------------------------------------------------------
# exact solutions
# ---------------------------------------------------------------------------


def riemann_free_stream_exact(z, t, k, *, a=1.0, c=1.0):
    """k-th moment of the exact free-streaming Riemann solution.

    E_k(z, t) = int mu^k I0(mu) dmu + int_{mu >= z/(ct)} mu^k I0(mu) dmu
    with the second integral evaluated adaptively from the split point.
    """
    ac = a * c
    w0 = riemann_weight_norm()

    def base(mu):
        return ac * w0 * riemann_shape_unnormalized(mu) * mu**k

    whole, _ = quad(base, -1.0, 1.0, limit=200)
    if t <= 0.0:
        return 2.0 * whole if z <= 0.0 else whole
    mustar = z / (c * t)
    if mustar <= -1.0:
        return 2.0 * whole
    if mustar >= 1.0:
        return whole
    upper, _ = quad(base, mustar, 1.0, limit=200)
    return whole + upper


def antidiffusive_exact(z, mu, *, a=1.0, c=1.0, lo=0.275, hi=0.1, z0=0.1):
    """Steady intensity of the three-region radiating slab, evaluated verbatim."""
    if mu == 0.0:
        raise ValueError("the steady solution is defined for mu != 0")
    ac = a * c

    def mid_region(zz, m):
        if m > 0:
            return lo * np.exp(-zz / m) + (1.0 - np.exp(-zz / m))
        return hi * np.exp(-(z0 - zz) / abs(m)) + (1.0 - np.exp(-(z0 - zz) / abs(m)))

    if 0.0 <= z <= z0:
        return ac * mid_region(z, mu)
    if z < 0.0:
        if mu > 0:
            return ac * lo
        return ac * (mid_region(0.0, mu) * np.exp(z / abs(mu))
                     + lo * (1.0 - np.exp(z / abs(mu))))
    # z > z0
    if mu > 0:
        return ac * (mid_region(z0, mu) * np.exp(-(z - z0) / mu)
                     + hi * (1.0 - np.exp(-(z - z0) / mu)))
    return ac * hi


def antidiffusive_exact_moments(z, k, *, a=1.0, c=1.0, nodes=128):
    """Moments of the steady exact intensity by half-range quadrature."""
    x, w = roots_legendre(nodes)
    xm, wm = 0.5 * x - 0.5, 0.5 * w
    xp, wp = 0.5 * x + 0.5, 0.5 * w
    total = 0.0
    for mu_h, w_h in ((xm, wm), (xp, wp)):
        vals = np.array([antidiffusive_exact(z, m, a=a, c=c) for m in mu_h])
        total += float((w_h * mu_h**k * vals).sum())
    return total
