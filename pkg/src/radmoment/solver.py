"""Path-conservative finite-volume solver for the slab moment models.

One step of ``run`` is a Lie splitting: an explicit convection sweep,
then a per-cell implicit source update.

Convection discretizes

    (1/c) dU/dt + dF(U)/dz + R(U) dU/dz = 0

with the HLL flux for the conservative part and, for the regularized
model, left/right fluctuation fluxes built from the path integral of
the non-conservative term along gamma(tau) = w_L + tau^k (w_R - w_L)
in the closure variables.  The non-conservative product sits only in
the last moment equation, where it equals -R_N with
R_N = K5[N+1, N+1] (alpha df_N/dz - 4 f_N dalpha/dz); it vanishes
identically for N = 1, where the plain and regularized models coincide.

The source update is implicit Euler; when the material couples to a
temperature law e(T), a scalar Newton iteration (with bisection
fallback) solves the per-cell (E0, e) system, and the discretization
conserves e + E0/c exactly when there is no external source.

Interface speeds come from the model spectrum: zeros of the
degree-(N+1) regularization-weight polynomial for the regularized
model (never faster than light), the quasi-linear eigenvalues for the
plain model (possibly superluminal), and the Legendre zeros for the
linear reference model.  The linear model runs in Legendre expansion
coefficients internally, which keeps the closure exactly conditioned
at reference orders N ~ 100.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

from . import basis, closure
from .basis import TableSet
from .closure import MomentState, SpectralCoeffs
from .errors import (
    BlowUpDetected,
    NewtonDivergence,
    RealizabilityError,
    SteadyStateNotReached,
)

MODELS = ("hmpn", "mpn", "pn")

#: steady state declared when max relative change per unit time drops below this
STEADY_TOL = 1e-10
_MAX_STEPS = 2_000_000


# ---------------------------------------------------------------------------
# mesh, state, material
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    z_left: float
    z_right: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 4:
            raise ValueError("need at least 4 cells")
        if not self.z_right > self.z_left:
            raise ValueError("empty domain")

    @property
    def dz(self):
        return (self.z_right - self.z_left) / self.n_cells

    def centers(self):
        return self.z_left + (np.arange(self.n_cells) + 0.5) * self.dz


@dataclass
class FieldState:
    """Cell-averaged moments plus material energy/temperature at one time."""

    grid: Grid
    E: np.ndarray  # (N+1, n_cells)
    e: np.ndarray  # (n_cells,)
    T: np.ndarray  # (n_cells,)
    t: float

    @property
    def N(self):
        return self.E.shape[0] - 1

    def copy(self):
        return FieldState(self.grid, self.E.copy(), self.e.copy(), self.T.copy(), self.t)


@dataclass(frozen=True)
class EnergyLaw:
    """Material internal energy as a function of temperature, and back."""

    e_of_T: callable
    T_of_e: callable


def quartic_energy_law(radiation_constant=1.0):
    """e = a T^4, the law used by the non-equilibrium benchmark."""
    a = radiation_constant
    return EnergyLaw(
        e_of_T=lambda T: a * T**4,
        T_of_e=lambda e: (np.maximum(e, 0.0) / a) ** 0.25,
    )


@dataclass(frozen=True)
class Material:
    """Opacities, external source, and the radiation/material coupling."""

    sigma_a: callable  # (z, T) -> array
    sigma_s: callable  # (z, T) -> array
    source: callable   # z -> array, isotropic emission rate s(z)
    radiation_constant: float = 1.0
    light_speed: float = 1.0
    energy_law: EnergyLaw | None = None     # None: temperature is not evolved
    fixed_temperature: callable | None = None  # prescribed T(z) when not evolved

    @property
    def ac(self):
        return self.radiation_constant * self.light_speed


@dataclass(frozen=True)
class BoundaryCondition:
    """One of infinite / reflective / vacuum / inflow(I_in)."""

    kind: str
    inflow: object = 0.0  # constant or callable of mu on the incoming half

    def __post_init__(self):
        if self.kind not in ("infinite", "reflective", "vacuum", "inflow"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")

    def inflow_at(self, mu):
        if callable(self.inflow):
            return np.asarray(self.inflow(mu), dtype=float)
        return np.full_like(np.asarray(mu, dtype=float), float(self.inflow))


@dataclass(frozen=True)
class PathSpec:
    """Path exponent and Simpson interval count for the fluctuation integral."""

    exponent: int = 1
    simpson_intervals: int = 1

    def __post_init__(self):
        if self.exponent < 1 or self.simpson_intervals < 1:
            raise ValueError("path exponent and interval count must be >= 1")


# ---------------------------------------------------------------------------
# quadrature caches
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _half_range_nodes(n=64):
    """(x_minus, w_minus, x_plus, w_plus) Gauss-Legendre nodes on [-1,0], [0,1]."""
    x, w = roots_legendre(n)
    return (0.5 * x - 0.5, 0.5 * w, 0.5 * x + 0.5, 0.5 * w)


@lru_cache(maxsize=None)
def _legendre_zero_bounds(N):
    lam = roots_legendre(N + 1)[0]
    return float(lam[0]), float(lam[-1])


# ---------------------------------------------------------------------------
# HLL flux and fluctuation fluxes
# ---------------------------------------------------------------------------


def hll_flux(U_L: MomentState, U_R: MomentState, lamL, lamR):
    """Three-branch HLL flux for the conservative part at one interface."""
    FL = closure.closure_flux(U_L)
    FR = closure.closure_flux(U_R)
    return _hll_vec(
        U_L.E[:, None], U_R.E[:, None], FL[:, None], FR[:, None],
        np.array([lamL]), np.array([lamR]),
    )[:, 0]


def _hll_vec(EL, ER, FL, FR, lamL, lamR):
    """Vectorized HLL: arrays (N+1, M) with interface speeds (M,)."""
    out = np.where(lamL >= 0.0, FL, FR)
    mid = (lamL < 0.0) & (lamR > 0.0)
    if np.any(mid):
        lL, lR = lamL[mid], lamR[mid]
        out[:, mid] = (
            lR * FL[:, mid] - lL * FR[:, mid] + lL * lR * (ER[:, mid] - EL[:, mid])
        ) / (lR - lL)
    return out


@lru_cache(maxsize=None)
def _simpson_rule(intervals):
    """Nodes and weights of the compound Simpson rule on [0, 1]."""
    n = 2 * intervals
    tau = np.linspace(0.0, 1.0, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (1.0 / n) / 3.0
    return tau, w


def reg_path_integral(w_L: SpectralCoeffs, w_R: SpectralCoeffs, path: PathSpec):
    """Path integral of R_N along gamma(tau) = w_L + tau^k (w_R - w_L).

    G = int_0^1 K5[N+1,N+1](alpha(tau)) [alpha(tau) f_N'(tau)
        - 4 f_N(tau) alpha'(tau)] dtau, by the compound Simpson rule.
    """
    return float(
        _path_integral_vec(
            np.array([w_L.alpha]), np.array([w_L.f[w_L.N]]),
            np.array([w_R.alpha]), np.array([w_R.f[w_R.N]]),
            w_L.N, path, precise=True,
        )[0]
    )


def _path_integral_vec(aL, fL, aR, fR, N, path: PathSpec, *, precise=False,
                       norm_L=None, norm_R=None):
    """Vectorized Simpson evaluation of the regularization path integral.

    ``norm_L``/``norm_R`` may carry the already-known table norms
    K5[N+1, N+1] at the endpoint states, saving two of the node builds.
    """
    if N == 1:
        return np.zeros_like(aL)  # f_1 = 0 along any path
    tau, wts = _simpson_rule(path.simpson_intervals)
    k = path.exponent
    tk = tau**k
    dtk = k * tau ** (k - 1) if k > 1 else np.ones_like(tau)
    da = aR - aL
    df = fR - fL
    alpha_tau = aL[None, :] + tk[:, None] * da[None, :]          # (Q, M)
    f_tau = fL[None, :] + tk[:, None] * df[None, :]
    norm = np.empty_like(alpha_tau)
    if norm_L is not None and norm_R is not None:
        norm[0] = norm_L
        norm[-1] = norm_R
        inner = alpha_tau[1:-1]
        if inner.size:
            norm[1:-1] = basis.reg_norm_only(inner.ravel(), N,
                                             precise=precise).reshape(inner.shape)
    else:
        norm[:] = basis.reg_norm_only(alpha_tau.ravel(), N,
                                      precise=precise).reshape(alpha_tau.shape)
    integrand = norm * (alpha_tau * df[None, :] - 4.0 * f_tau * da[None, :])
    integrand *= dtk[:, None]
    return wts @ integrand


def path_fluctuations(w_L: SpectralCoeffs, w_R: SpectralCoeffs, lamL, lamR,
                      path: PathSpec = PathSpec()):
    """Left/right fluctuation fluxes (Rminus, Rplus) at one interface.

    The non-conservative product of the regularized model is
    (0, ..., 0, -R_N), so the distributed vector g carries -G in its
    last entry; the branch split mirrors the HLL upwinding.
    """
    N = w_L.N
    G = reg_path_integral(w_L, w_R, path)
    rm, rp = _distribute_fluctuation(
        np.array([-G]), np.array([float(lamL)]), np.array([float(lamR)])
    )
    Rminus = np.zeros(N + 1)
    Rplus = np.zeros(N + 1)
    Rminus[N] = rm[0]
    Rplus[N] = rp[0]
    return Rminus, Rplus


def _distribute_fluctuation(g, lamL, lamR):
    """Branch split of the path-integral vector entry across the interface."""
    rminus = np.zeros_like(g)
    rplus = np.zeros_like(g)
    left = lamL >= 0.0
    right = lamR <= 0.0
    mid = ~left & ~right
    rplus[left] = -g[left]
    rminus[right] = g[right]
    if np.any(mid):
        denom = lamR[mid] - lamL[mid]
        rminus[mid] = -lamL[mid] * g[mid] / denom
        rplus[mid] = -lamR[mid] * g[mid] / denom
    return rminus, rplus


# ---------------------------------------------------------------------------
# boundary fluxes
# ---------------------------------------------------------------------------


def boundary_flux(side, bc: BoundaryCondition, w_interior: SpectralCoeffs):
    """Flux vector F^B_k = int mu^{k+1} I^B dmu at a domain boundary.

    The outgoing half-range carries the reconstructed interior ansatz;
    the incoming half carries I_out per the boundary kind.  The infinite
    case reduces exactly to the interior closure flux.
    """
    N = w_interior.N
    if bc.kind == "infinite":
        t = TableSet(w_interior.alpha, N, need_derivs=False, precise=True)
        f = w_interior.f[:, None].astype(basis._LD)
        E = closure.moments_vec(f, t)
        return closure.flux_vec(np.asarray(E, dtype=float), f, t)[:, 0]
    xm, wm, xp, wp = _half_range_nodes()
    if side == "left":
        mu_out, w_out, mu_in, w_in = xm, wm, xp, wp
    elif side == "right":
        mu_out, w_out, mu_in, w_in = xp, wp, xm, wm
    else:
        raise ValueError("side must be 'left' or 'right'")
    I_out = closure.ansatz_eval(w_interior, mu_out)
    powers = np.arange(N + 1)[:, None]
    F = (w_out * mu_out ** (powers + 1) * I_out).sum(axis=1)
    if bc.kind == "reflective":
        I_in = closure.ansatz_eval(w_interior, -mu_in)
    elif bc.kind == "vacuum":
        I_in = np.zeros_like(mu_in)
    else:  # inflow
        I_in = bc.inflow_at(mu_in)
    F += (w_in * mu_in ** (powers + 1) * I_in).sum(axis=1)
    return F


def _boundary_flux_from_tables(side, bc, tables, f, cell):
    """Boundary flux using one column of the step tables (solver path)."""
    N = tables.N
    a = np.asarray(tables.a4[:, cell], dtype=float)
    b = np.asarray(tables.b4[:, cell], dtype=float)
    alpha = float(tables.alpha[cell])
    fcol = np.asarray(f[:, cell], dtype=float)
    if bc.kind == "infinite":
        fc = f[:, cell : cell + 1]
        E = closure.moments_vec(fc, _TableColumn(tables, cell))
        return closure.flux_vec(np.asarray(E, dtype=float), fc,
                                _TableColumn(tables, cell))[:, 0]
    xm, wm, xp, wp = _half_range_nodes()
    if side == "left":
        mu_out, w_out, mu_in, w_in = xm, wm, xp, wp
    else:
        mu_out, w_out, mu_in, w_in = xp, wp, xm, wm

    def ansatz(mu):
        total = np.zeros_like(mu)
        pm = np.zeros_like(mu)
        p = np.ones_like(mu)
        total += fcol[0] * p
        for i in range(1, N + 1):
            pm, p = p, (mu - a[i - 1]) * p - (b[i - 1] * pm if i >= 2 else 0.0)
            if fcol[i] != 0.0:
                total += fcol[i] * p
        return total * (1.0 + alpha * mu) ** -4

    I_out = ansatz(mu_out)
    powers = np.arange(N + 1)[:, None]
    F = (w_out * mu_out ** (powers + 1) * I_out).sum(axis=1)
    if bc.kind == "reflective":
        I_in = ansatz(-mu_in)
    elif bc.kind == "vacuum":
        I_in = np.zeros_like(mu_in)
    else:
        I_in = bc.inflow_at(mu_in)
    F += (w_in * mu_in ** (powers + 1) * I_in).sum(axis=1)
    return F


class _TableColumn:
    """Single-cell view of a TableSet (enough for the closure helpers)."""

    def __init__(self, tables, cell):
        self.N = tables.N
        self.K4 = tables.K4[:, :, cell : cell + 1]
        self.alpha = tables.alpha[cell : cell + 1]


# ---------------------------------------------------------------------------
# per-step model pipeline
# ---------------------------------------------------------------------------


class _StepData:
    """Per-cell tables, coefficients, fluxes and speed bounds for one step.

    Cells whose flux ratio exceeds the stepping clamp are pulled back
    onto the admissible boundary (E1 rescaled; E0 untouched), and the
    whole step works with the clamped block.
    """

    def __init__(self, state: FieldState, model: str, precise=False):
        N = state.N
        self.model = model
        self.E = state.E
        if model == "pn":
            self.F = _pn_closure_flux_block(state.E)
            lo, hi = _legendre_zero_bounds(N)
            M = state.E.shape[1]
            self.lmin = np.full(M, lo)
            self.lmax = np.full(M, hi)
            self.tables = None
            self.f = None
            return
        E = state.E
        over = None
        if N >= 1 and model == "hmpn":
            # beam-front cells at the realizability boundary are projected
            # onto the weight-only ansatz (the boundary element of the
            # closure family): E0 kept, the whole moment tail rebuilt, so
            # the spectral tail f_N stays bounded.  The plain model is NOT
            # projected: its excursions past the boundary are the failure
            # mode under study and must surface as a blow-up.
            r = E[1] / E[0]
            cap = closure.SOLVER_FLUX_CLAMP
            over = np.abs(r) > cap
            if np.any(over):
                E = E.copy()
                E[1, over] = np.sign(r[over]) * cap * E[0, over]
            else:
                over = None
        need_derivs = model == "mpn" and N >= 2  # quasi-linear assembly for speeds
        cap = closure.SOLVER_FLUX_CLAMP if model == "hmpn" else basis.ALPHA_LIMIT
        tables = closure.tables_for_moments(E, N, clamp=True, precise=precise,
                                            need_derivs=need_derivs, cap=cap)
        if over is not None:
            m4 = np.asarray(tables.m4, dtype=float)
            ratios = m4[1 : N + 1, over] / m4[0, over]
            E[1 : N + 1, over] = E[0, over] * ratios
        f = closure.coeffs_vec(E, tables)
        self.E = E
        self.tables = tables
        self.f = f
        self.F = closure.flux_vec(E, f, tables)
        if model == "hmpn" or N == 1:
            # N = 1: the two models coincide; sharing the speed routine keeps
            # their trajectories bit-identical
            a = np.asarray(tables.a5[: N + 1], dtype=float)
            b = np.asarray(tables.b5[1 : N + 1], dtype=float)
            self.lmin, self.lmax = basis.extreme_tridiag_eigs(a, b)
        else:
            from .analysis import mpn_system_batch

            D, B = mpn_system_batch(tables, f)
            lam = np.linalg.eigvals(np.linalg.solve(D, B))
            self.lmin = lam.real.min(axis=1)
            self.lmax = lam.real.max(axis=1)
            self.max_mod = np.abs(lam).max(axis=1)

    def max_speed(self):
        if self.model != "hmpn" and self.model != "pn" and hasattr(self, "max_mod"):
            return float(self.max_mod.max())
        return float(np.maximum(np.abs(self.lmin), np.abs(self.lmax)).max())


def _pn_closure_flux_block(E):
    """Linear Legendre-closure flux for a moment block (moderate N)."""
    N = E.shape[0] - 1
    ell = _pn_closure_row(N)
    out = np.empty_like(np.asarray(E, dtype=float))
    out[:N] = E[1 : N + 1]
    out[N] = ell @ E
    return out


@lru_cache(maxsize=None)
def _pn_closure_row(N):
    """Row vector ell with E_{N+1} = ell . (E_0..E_N) for the linear closure.

    Built from the flat-weight mixed table: expansion coefficients are
    the triangular solve against K(alpha=0), and the closed moment is
    the degree-(N+1) table row (the Legendre coefficient of degree N+1
    is dropped).
    """
    t = TableSet(np.array([0.0]), N, need_derivs=False, precise=True)
    K = np.asarray(t.K4[:, :, 0], dtype=float)
    lower = K[: N + 1, : N + 1]
    row = K[N + 1, : N + 1]
    ell = np.linalg.solve(lower.T, row)
    return ell


def pn_closure_flux(U: MomentState):
    """Flux vector of the linear reference closure (truncated expansion)."""
    E = U.E[:, None]
    return _pn_closure_flux_block(E)[:, 0]


# ---------------------------------------------------------------------------
# convection step
# ---------------------------------------------------------------------------


def convection_step(state: FieldState, dt, model, path: PathSpec,
                    bc_left: BoundaryCondition, bc_right: BoundaryCondition,
                    material: Material, step_data: _StepData | None = None):
    """One explicit finite-volume sweep.

    U_i <- U_i - (c dt/dz) [(F_{i+1/2} - F_{i-1/2}) + (Rm_{i+1/2} - Rp_{i-1/2})]
    with boundary fluxes replacing HLL at the two boundary interfaces
    and no boundary fluctuations.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    N = state.N
    M = state.E.shape[1]
    c = material.light_speed
    data = step_data or _StepData(state, model)
    E, F = data.E, data.F
    lamL = np.minimum(data.lmin[:-1], data.lmin[1:])
    lamR = np.maximum(data.lmax[:-1], data.lmax[1:])
    Fhat = np.empty((N + 1, M + 1))
    Fhat[:, 1:-1] = _hll_vec(E[:, :-1], E[:, 1:], F[:, :-1], F[:, 1:], lamL, lamR)
    if model == "pn":
        Fhat[:, 0] = _pn_boundary_flux("left", bc_left, state.E[:, 0])
        Fhat[:, -1] = _pn_boundary_flux("right", bc_right, state.E[:, -1])
    else:
        Fhat[:, 0] = _boundary_flux_from_tables("left", bc_left, data.tables, data.f, 0)
        Fhat[:, -1] = _boundary_flux_from_tables("right", bc_right, data.tables, data.f, M - 1)
    coef = c * dt / state.grid.dz
    with np.errstate(invalid="ignore"):  # non-finite input surfaces as BlowUpDetected
        Enew = E - coef * (Fhat[:, 1:] - Fhat[:, :-1])
    if model == "hmpn" and N >= 2:
        alpha = np.asarray(data.tables.alpha, dtype=float)
        fN = np.asarray(data.f[N], dtype=float)
        norms = np.asarray(data.tables.kdiag5[N + 1], dtype=float)
        G = _path_integral_vec(alpha[:-1], fN[:-1], alpha[1:], fN[1:], N, path,
                               norm_L=norms[:-1], norm_R=norms[1:])
        g = -G  # last entry of the non-conservative product vector
        rminus, rplus = _distribute_fluctuation(g, lamL, lamR)
        rm_full = np.concatenate(([0.0], rminus, [0.0]))  # boundary fluctuations vanish
        rp_full = np.concatenate(([0.0], rplus, [0.0]))
        Enew[N] -= coef * (rm_full[1:] - rp_full[:-1])
    if not np.all(np.isfinite(Enew)):
        bad = int(np.argmax(~np.all(np.isfinite(Enew), axis=0)))
        raise BlowUpDetected(
            f"non-finite moments in cell {bad} at t={state.t:.6g}",
            time=state.t, cell=bad,
        )
    return FieldState(state.grid, Enew, state.e.copy(), state.T.copy(), state.t + dt)


def _pn_boundary_flux(side, bc, Ecol):
    """Moment-space boundary flux of the linear model from one cell's moments."""
    N = Ecol.shape[0] - 1
    u = np.linalg.solve(_legendre_moment_matrix(N)[: N + 1, : N + 1], Ecol)
    return _pn_boundary_flux_from_coeffs(side, bc, u, projection="moments")


def _legendre_sum(u, mu):
    """sum_k u_k P_k(mu) by the standard Legendre recurrence."""
    N = u.shape[0] - 1
    total = np.zeros_like(mu)
    pm = np.zeros_like(mu)
    p = np.ones_like(mu)
    for k in range(N + 1):
        if k == 1:
            pm, p = p, mu * p
        elif k >= 2:
            pm, p = p, ((2 * k - 1) * mu * p - (k - 1) * pm) / k
        total += u[k] * p
    return total


def _pn_boundary_flux_from_coeffs(side, bc, u, projection="legendre"):
    """Boundary flux for the linear model.

    ``projection="legendre"`` gives the flux of the coefficient
    equations, (2k+1)/2 int mu P_k I^B dmu; ``"moments"`` gives the
    raw moment flux int mu^{k+1} I^B dmu.
    """
    N = u.shape[0] - 1
    xm, wm, xp, wp = _half_range_nodes()
    if side == "left":
        mu_out, w_out, mu_in, w_in = xm, wm, xp, wp
    else:
        mu_out, w_out, mu_in, w_in = xp, wp, xm, wm
    I_out = _legendre_sum(u, mu_out)
    if bc.kind == "reflective":
        I_in = _legendre_sum(u, -mu_in)
    elif bc.kind == "vacuum":
        I_in = np.zeros_like(mu_in)
    elif bc.kind == "infinite":
        I_in = _legendre_sum(u, mu_in)
    else:
        I_in = bc.inflow_at(mu_in)
    if projection == "moments":
        powers = np.arange(N + 1)[:, None]
        F = (w_out * mu_out ** (powers + 1) * I_out).sum(axis=1)
        F += (w_in * mu_in ** (powers + 1) * I_in).sum(axis=1)
        return F
    k = np.arange(N + 1)[:, None]
    proj_out = (2 * k + 1) / 2.0 * _legendre_rows(N, mu_out)
    proj_in = (2 * k + 1) / 2.0 * _legendre_rows(N, mu_in)
    F = (w_out * mu_out * proj_out * I_out).sum(axis=1)
    F += (w_in * mu_in * proj_in * I_in).sum(axis=1)
    return F


def _legendre_rows(N, mu):
    """P_k(mu) for k = 0..N stacked as rows."""
    rows = np.empty((N + 1,) + mu.shape)
    pm = np.zeros_like(mu)
    p = np.ones_like(mu)
    rows[0] = p
    for k in range(1, N + 1):
        if k == 1:
            pm, p = p, mu * p
        else:
            pm, p = p, ((2 * k - 1) * mu * p - (k - 1) * pm) / k
        rows[k] = p
    return rows


# ---------------------------------------------------------------------------
# source step
# ---------------------------------------------------------------------------


def source_moments(U: MomentState, T, mat: Material, z=0.0):
    """Moment vector C of the interaction operator at one point.

    C_k = (sigma_s E_0 + a c sigma_a T^4 + s) / (k+1) - sigma_t E_k for
    even k, and C_k = -sigma_t E_k for odd k.
    """
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    TT = np.atleast_1d(np.asarray(T, dtype=float))
    sa = float(np.atleast_1d(mat.sigma_a(zz, TT))[0])
    ss = float(np.atleast_1d(mat.sigma_s(zz, TT))[0])
    s = float(np.atleast_1d(mat.source(zz))[0])
    st = sa + ss
    k = np.arange(U.N + 1)
    iso = ss * U.E[0] + mat.ac * sa * float(TT[0]) ** 4 + s
    C = -st * U.E
    C[k % 2 == 0] += iso / (k[k % 2 == 0] + 1)
    return C


def _coupled_absorption_update(E0, e, T, z, dt, mat: Material,
                               newton_tol=1e-12, newton_max=50):
    """Implicit per-cell solve for (E0, e, T) under absorption/emission.

    Solves e(T) - e_n - dt sigma_a(T) (E0^{n+1}(T) - a c T^4) = 0 with
    E0^{n+1}(T) = (E0_n + c dt (a c sigma_a(T) T^4 + s)) / (1 + c dt sigma_a(T)),
    by vectorized Newton (numeric derivative) with bisection fallback.
    The returned e uses the update identity, so e + E0/c is conserved to
    rounding when s = 0.
    """
    c = mat.light_speed
    ac = mat.ac
    law = mat.energy_law
    s = np.asarray(mat.source(z), dtype=float)

    def e0_new(Tv, sa):
        return (E0 + c * dt * (ac * sa * Tv**4 + s)) / (1.0 + c * dt * sa)

    def resid(Tv):
        sa = np.asarray(mat.sigma_a(z, Tv), dtype=float)
        return law.e_of_T(Tv) - e - dt * sa * (e0_new(Tv, sa) - ac * Tv**4)

    scale = np.maximum.reduce([np.abs(e), np.abs(E0) / c, np.full_like(e, 1e-30)])
    Tv = np.maximum(T.copy(), 0.0)
    converged = np.zeros(Tv.shape, dtype=bool)
    for _ in range(newton_max):
        R = resid(Tv)
        h = np.maximum(1e-7 * np.maximum(np.abs(Tv), 1.0), 1e-9)
        dR = (resid(Tv + h) - resid(Tv - h)) / (2.0 * h)
        step = np.where(dR != 0.0, R / np.where(dR == 0.0, 1.0, dR), 0.0)
        Tnew = Tv - step
        bad = ~np.isfinite(Tnew) | (Tnew < 0.0)
        Tnew = np.where(bad, 0.5 * Tv, Tnew)
        moved = np.abs(Tnew - Tv)
        Tv = np.where(converged, Tv, Tnew)
        converged |= (moved <= newton_tol * np.maximum(1.0, np.abs(Tv))) & (
            np.abs(R) <= newton_tol * np.maximum(scale, 1e-30) * 1e2
        )
        if np.all(converged):
            break
    if not np.all(converged):
        # bisection on [0, Tmax]: all energy dumped into the material
        Tmax = law.T_of_e(e + E0 / c + dt * np.abs(s)) * 1.5 + 1.0
        lo = np.zeros_like(Tv)
        hi = Tmax
        Rlo = resid(lo)
        Rhi = resid(hi)
        fixable = ~converged & (Rlo <= 0.0) & (Rhi >= 0.0)
        if np.any(~converged & ~fixable):
            cell = int(np.argmax(~converged & ~fixable))
            raise NewtonDivergence(
                f"temperature solve failed in cell {cell}",
                cell=cell, residual=float(resid(Tv)[cell]),
            )
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            Rm = resid(mid)
            takehi = Rm > 0.0
            hi = np.where(takehi, mid, hi)
            lo = np.where(takehi, lo, mid)
        Tv = np.where(converged, Tv, 0.5 * (lo + hi))
    sa = np.asarray(mat.sigma_a(z, Tv), dtype=float)
    E0n1 = e0_new(Tv, sa)
    en1 = e + dt * sa * (E0n1 - ac * Tv**4)
    return E0n1, en1, Tv


def implicit_source_step(state: FieldState, dt, mat: Material):
    """Implicit Euler update of the interaction operator, cell by cell."""
    if dt == 0.0:
        return state.copy()
    z = state.grid.centers()
    c = mat.light_speed
    E = state.E.copy()
    coupled = mat.energy_law is not None
    if coupled:
        E0n1, en1, Tn1 = _coupled_absorption_update(E[0], state.e, state.T, z, dt, mat)
    else:
        Tn1 = (np.asarray(mat.fixed_temperature(z), dtype=float)
               if mat.fixed_temperature is not None else state.T.copy())
        sa = np.asarray(mat.sigma_a(z, Tn1), dtype=float)
        s = np.asarray(mat.source(z), dtype=float)
        E0n1 = (E[0] + c * dt * (mat.ac * sa * Tn1**4 + s)) / (1.0 + c * dt * sa)
        en1 = state.e.copy()
    sa = np.asarray(mat.sigma_a(z, Tn1), dtype=float)
    ss = np.asarray(mat.sigma_s(z, Tn1), dtype=float)
    s = np.asarray(mat.source(z), dtype=float)
    st = sa + ss
    iso = ss * E0n1 + mat.ac * sa * Tn1**4 + s
    E[0] = E0n1
    for k in range(1, state.N + 1):
        if k % 2 == 0:
            E[k] = (E[k] + c * dt * iso / (k + 1)) / (1.0 + c * dt * st)
        else:
            E[k] = E[k] / (1.0 + c * dt * st)
    return FieldState(state.grid, E, en1, Tn1, state.t)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


def stable_dt(state: FieldState, cfl, model="hmpn", material: Material | None = None,
              step_data: _StepData | None = None):
    """dt = cfl * dz / max_cells max_k |lambda_k| under the active model."""
    if not 0.0 < cfl < 1.0:
        raise ValueError("cfl must lie in (0, 1)")
    data = step_data or _StepData(state, model)
    vmax = data.max_speed()
    c = material.light_speed if material is not None else 1.0
    return cfl * state.grid.dz / max(vmax, 1e-14) / c


@dataclass
class RunResult:
    snapshots: list
    final: FieldState
    n_steps: int
    steady: bool = False


def run(problem, cfg) -> RunResult:
    """Drive a problem to its end time (or steady state) under a config.

    Lie splitting per step: convection then implicit source.  Snapshot
    times are landed on exactly.  Blow-ups (non-finite or non-realizable
    states mid-run) surface as BlowUpDetected with time and cell.
    """
    grid = Grid(
        cfg.z_left if cfg.z_left is not None else problem.z_left,
        cfg.z_right if cfg.z_right is not None else problem.z_right,
        cfg.n_cells,
    )
    mat = problem.material
    N = cfg.order
    if cfg.model == "pn":
        return _run_pn(problem, cfg, grid)
    z = grid.centers()
    E0 = problem.initial_moments(z, N)
    e0, T0 = problem.initial_energy(z)
    state = FieldState(grid, E0, e0, T0, 0.0)
    path = PathSpec(cfg.path_exponent, cfg.simpson_intervals)
    snap_times = sorted(set(cfg.snapshots))
    t_end = cfg.t_end
    steady = cfg.steady_state
    snapshots = []
    pending = list(snap_times)
    n_steps = 0
    reached_steady = False
    while True:
        if not steady and state.t >= t_end - 1e-14:
            break
        try:
            data = _StepData(state, cfg.model)
            dt = stable_dt(state, cfg.cfl, cfg.model, mat, step_data=data)
        except RealizabilityError as err:
            raise BlowUpDetected(
                f"state left the realizable set at t={state.t:.6g}: {err}",
                time=state.t, cell=err.cell,
            ) from err
        if pending:
            dt = min(dt, pending[0] - state.t)
        if not steady:
            dt = min(dt, t_end - state.t)
        prev_E = state.E
        prev_e = state.e
        try:
            state = convection_step(state, dt, cfg.model, path,
                                    problem.bc_left, problem.bc_right, mat,
                                    step_data=data)
            state = implicit_source_step(state, dt, mat)
        except RealizabilityError as err:
            raise BlowUpDetected(
                f"state left the realizable set at t={state.t:.6g}: {err}",
                time=state.t, cell=err.cell,
            ) from err
        n_steps += 1
        if pending and state.t >= pending[0] - 1e-12:
            snapshots.append(state.copy())
            pending.pop(0)
        if steady:
            scale = max(float(np.max(np.abs(state.E))), 1e-300)
            diff = float(np.max(np.abs(state.E - prev_E)))
            diff = max(diff, float(np.max(np.abs(state.e - prev_e))))
            if diff / (scale * dt) < STEADY_TOL:
                reached_steady = True
                break
            if n_steps >= _MAX_STEPS:
                raise SteadyStateNotReached(f"no steady state after {n_steps} steps")
        elif n_steps >= _MAX_STEPS:
            raise SteadyStateNotReached(f"exceeded {n_steps} steps before t_end")
    if not snapshots or snapshots[-1].t != state.t:
        snapshots.append(state.copy())
    return RunResult(snapshots=snapshots, final=state, n_steps=n_steps,
                     steady=reached_steady)


# ---------------------------------------------------------------------------
# linear reference model in Legendre coefficients
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _legendre_moment_matrix(N):
    """G[j, k] = int mu^j P_k dmu (standard Legendre), exact rationals."""
    G = np.zeros((N + 2, N + 1))
    for j in range(N + 2):
        for k in range(min(j, N) + 1):
            if (j - k) % 2:
                continue
            num = 2 * factorial(j) * 2**k * factorial((j + k) // 2)
            den = factorial((j - k) // 2) * factorial(j + k + 1)
            G[j, k] = float(Fraction(num, den))
    return G


def _pn_flux_matrix(N):
    """Flux coupling of the Legendre coefficients: A u with the closure u_{N+1}=0."""
    A = np.zeros((N + 1, N + 1))
    for k in range(N + 1):
        if k - 1 >= 0:
            A[k, k - 1] = k / (2.0 * k - 1.0)
        if k + 1 <= N:
            A[k, k + 1] = (k + 1.0) / (2.0 * k + 3.0)
    return A


def _run_pn(problem, cfg, grid) -> RunResult:
    """Reference-model driver; state is the Legendre coefficient block."""
    N = cfg.order
    mat = problem.material
    c = mat.light_speed
    z = grid.centers()
    u = problem.initial_legendre(z, N)
    e, T = problem.initial_energy(z)
    A = _pn_flux_matrix(N)
    lo, hi = _legendre_zero_bounds(N)
    G = _legendre_moment_matrix(N)[: N + 1]
    t = 0.0
    dt_cfl = cfg.cfl * grid.dz / max(abs(lo), abs(hi)) / c
    snap_times = sorted(set(cfg.snapshots))
    pending = list(snap_times)
    snapshots = []
    n_steps = 0
    reached_steady = False

    def to_state(u, e, T, t):
        return FieldState(grid, np.asarray(G @ u, dtype=float), e.copy(), T.copy(), t)

    while True:
        if not cfg.steady_state and t >= cfg.t_end - 1e-14:
            break
        dt = dt_cfl
        if pending:
            dt = min(dt, pending[0] - t)
        if not cfg.steady_state:
            dt = min(dt, cfg.t_end - t)
        uprev, eprev = u, e
        # convection: HLL with constant speed bounds
        F = A @ u
        lamL, lamR = lo, hi
        mid = (lamR * F[:, :-1] - lamL * F[:, 1:] + lamL * lamR * (u[:, 1:] - u[:, :-1])) / (lamR - lamL)
        Fhat = np.empty((N + 1, u.shape[1] + 1))
        Fhat[:, 1:-1] = mid
        Fhat[:, 0] = _pn_boundary_flux_from_coeffs("left", problem.bc_left, u[:, 0])
        Fhat[:, -1] = _pn_boundary_flux_from_coeffs("right", problem.bc_right, u[:, -1])
        u = u - (c * dt / grid.dz) * (Fhat[:, 1:] - Fhat[:, :-1])
        # source
        if mat.energy_law is not None:
            E0n1, e, T = _coupled_absorption_update(2.0 * u[0], e, T, z, dt, mat)
            u0 = E0n1 / 2.0
        else:
            Tn1 = (np.asarray(mat.fixed_temperature(z), dtype=float)
                   if mat.fixed_temperature is not None else T)
            sa = np.asarray(mat.sigma_a(z, Tn1), dtype=float)
            s = np.asarray(mat.source(z), dtype=float)
            u0 = (u[0] + c * dt * (mat.ac * sa * Tn1**4 + s) / 2.0) / (1.0 + c * dt * sa)
            T = Tn1
        sa = np.asarray(mat.sigma_a(z, T), dtype=float)
        ss = np.asarray(mat.sigma_s(z, T), dtype=float)
        st = sa + ss
        u[0] = u0
        u[1:] = u[1:] / (1.0 + c * dt * st)
        t += dt
        n_steps += 1
        if not np.all(np.isfinite(u)):
            raise BlowUpDetected(f"linear model produced non-finite state at t={t:.6g}", time=t)
        if pending and t >= pending[0] - 1e-12:
            snapshots.append(to_state(u, e, T, t))
            pending.pop(0)
        if cfg.steady_state:
            scale = max(float(np.max(np.abs(u))), 1e-300)
            diff = float(np.max(np.abs(u - uprev)))
            diff = max(diff, float(np.max(np.abs(e - eprev))))
            if diff / (scale * dt) < STEADY_TOL:
                reached_steady = True
                break
        if n_steps >= _MAX_STEPS:
            raise SteadyStateNotReached(f"linear model exceeded {n_steps} steps")
    final = to_state(u, e, T, t)
    if not snapshots or snapshots[-1].t != t:
        snapshots.append(final)
    return RunResult(snapshots=snapshots, final=final, n_steps=n_steps,
                     steady=reached_steady)
