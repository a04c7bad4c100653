"""Moment states, spectral coefficients, and the nonlinear closure.

The ansatz is I(mu) = sum_i f_i p_i(mu) w(mu; alpha) with the weight
w = (1 + alpha*mu)^-4 and alpha tied to the flux ratio r = E1/E0 by
alpha = -3r / (2 + sqrt(4 - 3 r^2)), which makes f_1 vanish identically.
The closure returns E_{N+1} = sum_k K[N+1, k] f_k.

Public operations work on small dataclasses; the solver uses the
vectorized ``*_vec`` forms that carry a trailing cell axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import basis
from .basis import ALPHA_LIMIT, TableSet
from .errors import DomainError, RealizabilityError, RealizabilityWarning

#: |f1| above this fraction of f0 after conversion indicates a basis bug
_F1_DRIFT = 1e-10

#: flux-ratio clamp used during time stepping.  The orthogonalization
#: tables to depth N+2 stay numerically positive definite (extended
#: precision) only for |alpha| below about 1 - 1e-3, i.e. |E1/E0| below
#: roughly this value; beam-front cells are clamped onto it.  The
#: Eddington factor there differs from the exact beam limit by < 1e-3.
SOLVER_FLUX_CLAMP = 1.0 - 1e-3


@dataclass(frozen=True)
class MomentState:
    """Moment vector (E_0, ..., E_N) of the specific intensity on one cell."""

    E: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "E", np.asarray(self.E, dtype=float))

    @property
    def N(self):
        return self.E.shape[0] - 1

    @property
    def flux_ratio(self):
        return float(self.E[1] / self.E[0])


@dataclass(frozen=True)
class SpectralCoeffs:
    """Closure variables w = (f_0, alpha, f_2, ..., f_N); f_1 is identically 0."""

    f: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "f", np.asarray(self.f, dtype=float))

    @property
    def N(self):
        return self.f.shape[0] - 1


class Realizability(Enum):
    OK = "ok"
    CLAMPED = "clamped"
    VIOLATED = "violated"


@dataclass(frozen=True)
class RealizabilityReport:
    status: Realizability
    index: int | None = None

    def __bool__(self):
        return self.status is not Realizability.VIOLATED


# ---------------------------------------------------------------------------
# alpha from the flux ratio
# ---------------------------------------------------------------------------


def alpha_from_flux_ratio(r):
    """alpha = -3r / (2 + sqrt(4 - 3 r^2)), clamping |r| to the realizable range."""
    r = float(r)
    if not np.isfinite(r):
        raise DomainError(f"flux ratio must be finite, got {r}")
    if abs(r) >= 1.0:
        warnings.warn(
            f"flux ratio {r} clamped to the realizable boundary", RealizabilityWarning
        )
        r = np.clip(r, -ALPHA_LIMIT, ALPHA_LIMIT)
    return float(_alpha_vec(np.array([r]))[0])


def _alpha_vec(r):
    """Vectorized alpha(r); caller is responsible for clamping r."""
    r = np.asarray(r, dtype=float)
    alpha = -3.0 * r / (2.0 + np.sqrt(4.0 - 3.0 * r * r))
    return np.clip(alpha, -ALPHA_LIMIT, ALPHA_LIMIT)


def clamp_flux_ratio(E, *, clamp, cap=None):
    """Flux ratio per cell, clamped (solver) or validated (setup)."""
    r = E[1] / E[0]
    if clamp:
        cap = SOLVER_FLUX_CLAMP if cap is None else cap
        return np.clip(r, -cap, cap)
    bad = ~(np.abs(r) < 1.0)
    if np.any(bad):
        cell = int(np.argmax(bad))
        raise RealizabilityError(
            f"|E1/E0| = {abs(r[cell]):.6g} >= 1", index=1, cell=cell
        )
    return r


# ---------------------------------------------------------------------------
# vectorized core (trailing cell axis)
# ---------------------------------------------------------------------------


def tables_for_moments(E, N, *, clamp=False, precise=True, need_derivs=False, cap=None):
    """TableSet at the per-cell alpha implied by the moment block E (N+1, M)."""
    if np.any(E[0] <= 0.0):
        cell = int(np.argmax(E[0] <= 0.0))
        raise RealizabilityError("E0 must be positive", index=0, cell=cell)
    r = clamp_flux_ratio(E, clamp=clamp, cap=cap)
    alpha = _alpha_vec(r)
    return TableSet(alpha, N, need_derivs=need_derivs, precise=precise)


def coeffs_vec(E, tables):
    """Expansion coefficients f (N+1, M) by the triangular recursion.

    f_i = (E_i - sum_{j<i} K[i, j] f_j) / K[i, i]; f_1 is checked to be
    numerically zero and then pinned to exactly zero.
    """
    N = tables.N
    E = np.asarray(E)
    f = np.zeros((N + 1,) + E.shape[1:], dtype=basis._LD)
    K = tables.K4
    for i in range(N + 1):
        acc = E[i].astype(basis._LD)
        for j in range(i):
            acc = acc - K[i, j] * f[j]
        f[i] = acc / K[i, i]
    if N >= 1:
        # tolerance: relative to f0 plus the rounding floor of the
        # cancellation operands E1 - K10 f0 (f0 collapses like (1-|alpha|)^3
        # toward the realizability boundary, where the relative gate alone
        # would sit below attainable noise)
        floor = 1e-16 * (np.abs(E[1]) + np.abs(K[1, 0] * f[0])) / K[1, 1]
        drift = np.abs(f[1]) - (_F1_DRIFT * np.abs(f[0]) + floor)
        if np.any(drift > 0.0):
            cell = int(np.argmax(drift))
            raise RealizabilityError(
                f"f1 drift {float(np.abs(f[1]).max()):.3e} exceeds tolerance; "
                "basis inconsistent with the flux-ratio parametrization",
                index=1,
                cell=cell,
            )
        f[1] = 0.0
    return f


def moments_vec(f, tables, rows=None):
    """E_k = sum_j K[k, j] f_j for k in ``rows`` (default 0..N)."""
    N = tables.N
    rows = list(range(N + 1) if rows is None else rows)
    K = tables.K4
    out = np.empty((len(rows),) + f.shape[1:], dtype=basis._LD)
    for idx, k in enumerate(rows):
        acc = K[k, 0] * f[0]
        for j in range(1, min(k, N) + 1):
            acc = acc + K[k, j] * f[j]
        out[idx] = acc
    return out


def closure_row_vec(f, tables):
    """The closed moment E_{N+1} = sum_k K[N+1, k] f_k, float64."""
    N = tables.N
    K = tables.K4
    acc = K[N + 1, 0] * f[0]
    for j in range(1, N + 1):
        acc = acc + K[N + 1, j] * f[j]
    return np.asarray(acc, dtype=float)


def flux_vec(E, f, tables):
    """Closure flux (E_1, ..., E_{N+1}) as float64, shape (N+1, M)."""
    N = tables.N
    out = np.empty_like(np.asarray(E, dtype=float))
    out[: N] = E[1 : N + 1]
    out[N] = closure_row_vec(f, tables)
    return out


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _validated_tables(U: MomentState, *, need_derivs=False):
    return tables_for_moments(U.E[:, None], U.N, clamp=False, precise=True,
                              need_derivs=need_derivs)


def moments_to_coeffs(U: MomentState) -> SpectralCoeffs:
    """Invert the moment constraints for the closure variables."""
    t = _validated_tables(U)
    f = coeffs_vec(U.E[:, None], t)
    return SpectralCoeffs(f=np.asarray(f[:, 0], dtype=float), alpha=float(t.alpha[0]))


def coeffs_to_moments(w: SpectralCoeffs) -> MomentState:
    """Exact linear map E_k = sum_j K[k, j] f_j through the mixed table."""
    t = TableSet(w.alpha, w.N, need_derivs=False, precise=True)
    E = moments_vec(w.f[:, None].astype(basis._LD), t)
    return MomentState(E=np.asarray(E[:, 0], dtype=float))


def closure_flux(U: MomentState) -> np.ndarray:
    """Flux vector (E_1, ..., E_{N+1}) with the closed last entry."""
    t = _validated_tables(U)
    f = coeffs_vec(U.E[:, None], t)
    return flux_vec(U.E[:, None], f, t)[:, 0]


def regularization_multipliers(w: SpectralCoeffs):
    """Coefficients (cf, ca) of the non-conservative term.

    The extra term in the last moment equation is
    R_N = cf * d f_N/dz + ca * d alpha/dz with
    cf = K5[N+1, N+1] * alpha and ca = -4 * K5[N+1, N+1] * f_N;
    it vanishes identically for N = 1 because f_1 = 0.
    """
    t = TableSet(w.alpha, w.N, need_derivs=False, precise=True)
    norm = float(t.reg_norm[0])
    cf = norm * w.alpha
    ca = -4.0 * norm * float(w.f[w.N])
    return cf, ca


def ansatz_eval(w: SpectralCoeffs, mu):
    """Reconstructed intensity sum_i f_i p_i(mu) * weight(mu; alpha)."""
    t = TableSet(w.alpha, w.N, need_derivs=False, precise=True)
    a = t.a4[:, 0]
    b = t.b4[:, 0]
    mu_arr = np.asarray(mu, dtype=float)
    total = np.zeros_like(mu_arr)
    for i in range(w.N + 1):
        if w.f[i] == 0.0:
            continue
        total = total + w.f[i] * basis.polynomial_eval(a, b, mu_arr, i)
    total = total * basis.weight_value(mu_arr, w.alpha)
    return total if mu_arr.ndim else float(total)


def ansatz_eval_vec(f, alpha, tables, mu_nodes):
    """Intensity at quadrature nodes for each cell: (n_nodes, M)."""
    a, b = tables.a4, tables.b4
    M = f.shape[-1]
    mu = np.asarray(mu_nodes, dtype=float)[:, None]
    pm = np.zeros((mu.shape[0], M))
    p = np.ones((mu.shape[0], M))
    total = np.zeros((mu.shape[0], M))
    af = np.asarray(a, dtype=float)
    bf = np.asarray(b, dtype=float)
    ff = np.asarray(f, dtype=float)
    total += ff[0] * p
    for i in range(1, f.shape[0]):
        pm, p = p, (mu - af[i - 1]) * p - (bf[i - 1] * pm if i >= 2 else 0.0)
        total += ff[i] * p
    total *= (1.0 + alpha * mu) ** -4
    return total


def realizability_check(U: MomentState) -> RealizabilityReport:
    """First-order admissibility diagnosis: OK, Clamped, or Violated(index)."""
    E = np.asarray(U.E, dtype=float)
    if not np.all(np.isfinite(E)):
        return RealizabilityReport(Realizability.VIOLATED, index=int(np.argmax(~np.isfinite(E))))
    if E[0] <= 0.0:
        return RealizabilityReport(Realizability.VIOLATED, index=0)
    if U.N >= 1:
        r = abs(E[1] / E[0])
        if r >= 1.0:
            return RealizabilityReport(Realizability.VIOLATED, index=1)
        if r >= 1.0 - 1e-10:
            return RealizabilityReport(Realizability.CLAMPED, index=1)
    return RealizabilityReport(Realizability.OK)
