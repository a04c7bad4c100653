"""Anisotropy-parametrized polynomial machinery.

Everything here is a function of the scalar ``alpha`` in (-1, 1) that
parametrizes the closure weight ``(1 + alpha*mu)^-4`` and the
regularization weight ``(1 + alpha*mu)^-5`` on mu in [-1, 1]:

* moments ``m_j = int mu^j (1 + alpha*mu)^-m dmu`` and their
  alpha-derivatives,
* the monic orthogonal polynomials of both weights via Gram-Schmidt,
  stored as the mixed table ``K[j, k] = int mu^j p_k w dmu``,
* three-term recurrence coefficients, characteristic speeds (zeros of
  the degree-(N+1) regularization-weight polynomial), and the coupling
  coefficients beta_k, gamma_k linking the two polynomial families.

Numerical strategy.  The naive closed form of the moments (binomial
expansion after t = 1 + alpha*mu) cancels catastrophically for deep
moments at moderate alpha, so two other exact routes are used instead:
a power series in alpha whose surviving terms all share one sign (used
for |alpha| < 0.7), and an integration-by-parts ladder over the weight
exponent (used for |alpha| >= 0.7, where its forward error factor
(1/|alpha|)^j stays small).  The Gram-Schmidt recursion itself loses
roughly a digit per table column, so moments and tables are carried in
extended precision and converted to float64 at the API boundary.

All core routines are vectorized over a trailing axis of alpha values;
this is what makes the finite-volume solver affordable (one table build
per mesh per time step).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import AccuracyError, DomainError, RealizabilityError

_LD = np.longdouble

#: states are clamped so that |alpha| never reaches 1, where the moments diverge
ALPHA_LIMIT = 1.0 - 1e-10

#: crossover between the small-alpha series and the large-alpha ladder
_LADDER_SPLIT = 0.7


# ---------------------------------------------------------------------------
# moments of (1 + alpha*mu)^-m
# ---------------------------------------------------------------------------

_SERIES_ORDERS = ((0.20, 40), (0.35, 60), (0.48, 90), (0.58, 130), (_LADDER_SPLIT, 210))


def _series_order(amax: float) -> int:
    for bound, order in _SERIES_ORDERS:
        if amax <= bound:
            return order
    return _SERIES_ORDERS[-1][1]


@lru_cache(maxsize=None)
def _series_matrix(m: int, jmax: int, order: int, precise: bool):
    """A[j, n] with m_j = sum_n A[j, n] alpha^n; zero where n+j is odd."""
    dtype = _LD if precise else np.float64
    n = np.arange(order + 1)
    binom = np.array([comb(m + k - 1, k) for k in n], dtype=dtype)
    sign = np.where(n % 2 == 0, 1.0, -1.0).astype(dtype)
    A = np.zeros((jmax + 1, order + 1), dtype=dtype)
    for j in range(jmax + 1):
        mask = (n + j) % 2 == 0
        A[j, mask] = sign[mask] * binom[mask] * dtype(2.0) / (n[mask] + j + 1).astype(dtype)
    return A


def _moments_series(alpha, m, jmax, precise):
    """Moments by the alpha power series; exact-parity, cancellation-free."""
    order = _series_order(float(np.max(np.abs(alpha))) if alpha.size else 0.0)
    A = _series_matrix(m, jmax, order, precise)
    dtype = _LD if precise else np.float64
    a = alpha.astype(dtype)
    apow = np.empty((order + 1, a.shape[0]), dtype=dtype)
    apow[0] = 1.0
    for n in range(1, order + 1):
        apow[n] = apow[n - 1] * a
    if precise:
        return np.einsum("jn,nm->jm", A, apow)
    return (A @ apow).astype(_LD)


def _moments_ladder(alpha, mtop, jmax):
    """Moments of all exponents 0..mtop at once.

    m_j^(m) = (m_{j-1}^(m-1) - m_{j-1}^(m)) / alpha, seeded by the exact
    closed forms at j = 0.  Stable for |alpha| >= ~0.7.
    """
    a = alpha.astype(_LD)
    M = a.shape[0]
    out = np.zeros((mtop + 1, jmax + 1, M), dtype=_LD)
    j = np.arange(jmax + 1)
    out[0] = np.where(j % 2 == 0, 2.0 / (j + 1.0), 0.0)[:, None].astype(_LD)
    one = _LD(1.0)
    for m in range(1, mtop + 1):
        if m == 1:
            out[m, 0] = np.log((one + a) / (one - a)) / a
        else:
            out[m, 0] = ((one + a) ** (1 - m) - (one - a) ** (1 - m)) / (a * (1 - m))
    for jj in range(1, jmax + 1):
        for m in range(1, mtop + 1):
            out[m, jj] = (out[m - 1, jj - 1] - out[m, jj - 1]) / a
    return out


def moment_array(alpha, m, jmax, *, precise=True):
    """``m_j(alpha)`` for j = 0..jmax, shape (jmax+1, len(alpha)), longdouble.

    ``alpha`` is a 1-D array with |alpha| < 1.  ``precise=False`` runs the
    series branch in float64 (solver hot path; relative error <= ~1e-15
    on the moments themselves).
    """
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty((jmax + 1, alpha.shape[0]), dtype=_LD)
    big = np.abs(alpha) >= _LADDER_SPLIT
    if np.any(big):
        out[:, big] = _moments_ladder(alpha[big], m, jmax)[m]
    if np.any(~big):
        out[:, ~big] = _moments_series(alpha[~big], m, jmax, precise)
    return out


def moment_array_all(alpha, mtop, jmax, *, precise=True, levels=None):
    """Moments of exponents 0..mtop, shape (mtop+1, jmax+1, M).

    ``levels`` restricts the series work to the listed exponents (the
    ladder branch produces the whole tower at no extra cost); entries of
    other levels are left unset in the series region.
    """
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty((mtop + 1, jmax + 1, alpha.shape[0]), dtype=_LD)
    big = np.abs(alpha) >= _LADDER_SPLIT
    if np.any(big):
        out[:, :, big] = _moments_ladder(alpha[big], mtop, jmax)
    if np.any(~big):
        small = ~big
        wanted = range(mtop + 1) if levels is None else levels
        j = np.arange(jmax + 1)
        flat = np.where(j % 2 == 0, 2.0 / (j + 1.0), 0.0).astype(_LD)
        for m in wanted:
            if m == 0:
                out[0][:, small] = flat[:, None]
            else:
                out[m][:, small] = _moments_series(alpha[small], m, jmax, precise)
    return out


# ---------------------------------------------------------------------------
# Gram-Schmidt mixed tables
# ---------------------------------------------------------------------------


def gram_schmidt_table(mom, ncols, nrows, dmom=None):
    """Mixed table K[j, k] = int mu^j p_k w dmu from raw moments.

    Columns are built by the defining recursion
    ``K[j, k] = m_{j+k} - sum_{l<k} (K[k, l]/K[l, l]) K[j, l]``.
    With ``dmom`` given, the alpha-derivative table is produced by exact
    forward-mode differentiation of the same recursion.

    Raises RealizabilityError if a diagonal entry is not positive (the
    moment sequence is not positive definite to the requested depth).
    """
    M = mom.shape[-1]
    K = np.zeros((nrows, ncols, M), dtype=_LD)
    K[:, 0] = mom[:nrows]
    want_d = dmom is not None
    if want_d:
        dK = np.zeros_like(K)
        dK[:, 0] = dmom[:nrows]
    for k in range(1, ncols):
        diag = K[np.arange(k), np.arange(k)]  # (k, M)
        if np.any(diag <= 0.0):
            bad = int(np.argmax(np.any(diag <= 0.0, axis=-1)))
            raise RealizabilityError(
                f"nonpositive norm K[{bad},{bad}] while orthogonalizing", index=bad
            )
        c = K[k, :k] / diag  # (k, M)
        rows = np.arange(k, nrows)
        K[rows, k] = mom[rows + k] - np.einsum("lm,jlm->jm", c, K[k:, :k])
        if want_d:
            dc = (dK[k, :k] - c * dK[np.arange(k), np.arange(k)]) / diag
            dK[rows, k] = (
                dmom[rows + k]
                - np.einsum("lm,jlm->jm", dc, K[k:, :k])
                - np.einsum("lm,jlm->jm", c, dK[k:, :k])
            )
    kk = np.arange(ncols)
    if np.any(K[kk, kk] <= 0.0):
        bad = int(np.argmax(np.any(K[kk, kk] <= 0.0, axis=-1)))
        raise RealizabilityError(f"nonpositive norm K[{bad},{bad}]", index=bad)
    return (K, dK) if want_d else (K, None)


def _recurrence_from_table(K):
    """Shifts a_k and norm ratios b_k from a mixed table.

    a[k] = K[k+1,k]/K[k,k] - K[k,k-1]/K[k-1,k-1]   (k <= nrows-2)
    b[k] = K[k,k]/K[k-1,k-1], b[0] = 0             (k <= ncols-1)
    """
    nrows, ncols = K.shape[0], K.shape[1]
    M = K.shape[-1]
    na = min(nrows - 1, ncols)
    a = np.zeros((na, M), dtype=_LD)
    b = np.zeros((ncols, M), dtype=_LD)
    # a_k = s_k - s_{k+1} with s_k = -K[k,k-1]/K[k-1,k-1] the sub-leading
    # coefficient of the monic p_k (s_0 = 0)
    for k in range(na):
        s_k = -(K[k, k - 1] / K[k - 1, k - 1]) if k >= 1 else _LD(0.0)
        s_k1 = -(K[k + 1, k] / K[k, k])
        a[k] = s_k - s_k1
    for k in range(1, ncols):
        b[k] = K[k, k] / K[k - 1, k - 1]
    return a, b


class TableSet:
    """All alpha-dependent tables for one closure order, vectorized.

    ``alpha`` is a 1-D float array; every stored table has a trailing
    axis of the same length.  ``need_derivs=False`` skips the
    alpha-derivative table and the coupling coefficients (solver hot
    path does not use them).
    """

    def __init__(self, alpha, N, *, need_derivs=True, precise=True):
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        if np.any(np.abs(alpha) >= 1.0):
            raise DomainError("|alpha| must be < 1")
        self.alpha = alpha
        self.N = int(N)
        ncols = N + 2  # polynomial degrees 0..N+1
        nrows = N + 3  # mixed-table rows 0..N+2 (feeds a_k through k=N+1)
        jtop = nrows - 1 + ncols - 1
        if need_derivs:
            mom = moment_array_all(alpha, 5, jtop + 1, precise=precise, levels=(4, 5))
            m4, m5 = mom[4], mom[5]
            dm4 = -4.0 * m5[1 : jtop + 2]
            self.K4, self.dK4 = gram_schmidt_table(m4, ncols, nrows, dm4)
        else:
            mom = moment_array_all(alpha, 5, jtop, precise=precise, levels=(4, 5))
            m4, m5 = mom[4], mom[5]
            self.K4, self.dK4 = gram_schmidt_table(m4, ncols, nrows)
        self.K5, _ = gram_schmidt_table(m5, ncols, nrows)
        self.m4, self.m5 = m4, m5
        kk = np.arange(ncols)
        self.kdiag4 = self.K4[kk, kk]
        self.kdiag5 = self.K5[kk, kk]
        self.a4, self.b4 = _recurrence_from_table(self.K4)
        self.a5, self.b5 = _recurrence_from_table(self.K5)
        if need_derivs:
            self.dkdiag4 = self.dK4[kk, kk]
            self.beta = self.kdiag4 / self.kdiag5
            self.gamma = self.dkdiag4 / self.kdiag5
        else:
            self.dkdiag4 = None
            self.beta = None
            self.gamma = None

    @property
    def reg_norm(self):
        """K5[N+1, N+1], the scale of the regularization term."""
        return self.kdiag5[self.N + 1]

    def flux_ratio(self):
        """E1/E0 implied by alpha (equals m4_1/m4_0)."""
        return np.asarray(self.m4[1] / self.m4[0], dtype=float)


def reg_norm_only(alpha, N, *, precise=False):
    """K5[N+1, N+1] alone (path-integrand evaluations), float64."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    ncols = N + 2
    m5 = moment_array(alpha, 5, 2 * ncols - 2, precise=precise)
    K5, _ = gram_schmidt_table(m5, ncols, ncols)
    return np.asarray(K5[N + 1, N + 1], dtype=float)


# ---------------------------------------------------------------------------
# tridiagonal eigenvalues (characteristic speeds)
# ---------------------------------------------------------------------------


def _sturm_count(d, e2, x):
    """Number of eigenvalues of the symmetric tridiagonal (d, sqrt(e2)) below x."""
    n = d.shape[0]
    q = d[0] - x
    count = (q < 0.0).astype(np.int64)
    tiny = 1e-300
    for i in range(1, n):
        q = np.where(np.abs(q) < tiny, -tiny, q)
        q = (d[i] - x) - e2[i - 1] / q
        count += q < 0.0
    return count


def extreme_tridiag_eigs(diag, offsq, iters=52):
    """(smallest, largest) eigenvalues of symmetric tridiagonals, vectorized.

    ``diag``: (n, M) diagonal entries; ``offsq``: (n-1, M) squared
    off-diagonal entries.  Bisection on the Sturm count, with both
    extreme targets processed in one fused pass; deterministic.
    """
    d = np.asarray(diag, dtype=float)
    e2 = np.asarray(offsq, dtype=float)
    n, M = d.shape
    # stacked brackets: first M entries chase the smallest eigenvalue,
    # the rest chase the largest
    lo = np.full(2 * M, -1.0 - 1e-9)
    hi = np.full(2 * M, 1.0 + 1e-9)
    target = np.empty(2 * M, dtype=np.int64)
    target[:M] = 1
    target[M:] = n
    dd = np.concatenate([d, d], axis=1)
    ee = np.concatenate([e2, e2], axis=1)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        cnt = _sturm_count(dd, ee, mid)
        take_hi = cnt >= target
        hi = np.where(take_hi, mid, hi)
        lo = np.where(take_hi, lo, mid)
    res = 0.5 * (lo + hi)
    return res[:M], res[M:]


def characteristic_speeds(alpha, N, *, tables=None):
    """Zeros of the degree-(N+1) regularization-weight polynomial, ascending.

    These are the eigenvalues of the symmetrized (N+1)x(N+1) Jacobi
    matrix (diagonal a_k, off-diagonal sqrt(b_k)); all real, simple and
    inside (-1, 1).
    """
    if tables is None:
        tables = TableSet(alpha, N, need_derivs=False)
    a = np.asarray(tables.a5[: N + 1, 0], dtype=float)
    b = np.asarray(tables.b5[1 : N + 1, 0], dtype=float)
    if np.any(b <= 0.0):
        raise RealizabilityError("nonpositive recurrence coupling", index=int(np.argmin(b)))
    if N == 0:
        return a.copy()
    return eigh_tridiagonal(a, np.sqrt(b), eigvals_only=True)


def polynomial_eval(a, b, mu, k):
    """p_k(mu) from recurrence shifts/couplings (monic three-term form)."""
    mu = np.asarray(mu, dtype=float)
    pm = np.zeros_like(mu)
    p = np.ones_like(mu)
    for i in range(k):
        pm, p = p, (mu - float(a[i])) * p - (float(b[i]) * pm if i >= 1 else 0.0)
    return p if mu.ndim else float(p)


# ---------------------------------------------------------------------------
# public scalar-facing types and operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightMoments:
    """Moments of one weight family at one alpha.

    values[j] = int mu^j (1 + alpha*mu)^-order_m dmu, j = 0..j_max, with
    their alpha-derivatives obtained from the exponent-raising identity
    d m_j / d alpha = -order_m * m_{j+1}^(order_m+1).
    """

    alpha: float
    order_m: int
    values: np.ndarray
    derivs: np.ndarray


def weight_moments(alpha, order_m, j_max):
    """Moments and alpha-derivatives of the weight (1 + alpha*mu)^-order_m.

    Raises DomainError for |alpha| >= 1 and AccuracyError if the result
    fails an independent integration-by-parts cross-check at 1e-10.
    """
    alpha = float(alpha)
    if not np.isfinite(alpha) or abs(alpha) >= 1.0:
        raise DomainError(f"alpha must lie in (-1, 1), got {alpha}")
    if order_m not in (4, 5):
        raise DomainError(f"weight exponent must be 4 or 5, got {order_m}")
    if j_max < 1:
        raise DomainError("j_max must be >= 1")
    avec = np.array([alpha])
    mom = moment_array_all(avec, order_m + 1, j_max + 2, precise=True)
    vals = mom[order_m][: j_max + 1, 0]
    derivs = -order_m * mom[order_m + 1][1 : j_max + 2, 0]
    lower = mom[order_m - 1][:, 0]
    _parts_crosscheck(alpha, order_m, vals, lower)
    return WeightMoments(
        alpha=alpha,
        order_m=order_m,
        values=np.asarray(vals, dtype=float),
        derivs=np.asarray(derivs, dtype=float),
    )


def _parts_crosscheck(alpha, m, vals, lower, rtol=1e-10):
    """Integration-by-parts identity as an independent validation route.

    m_j^(m) = [(1+a)^(1-m) - (-1)^j (1-a)^(1-m)]/(a(1-m))
              + j/(a(m-1)) * m_{j-1}^(m-1)
    The residual is measured against the operand magnitudes, which is
    the honest scale when alpha is small and the two terms nearly cancel.
    """
    if alpha == 0.0:
        return
    a = _LD(alpha)
    hi = (_LD(1.0) + a) ** (1 - m)
    lo = (_LD(1.0) - a) ** (1 - m)
    for j in range(1, len(vals)):
        bterm = (hi - (-1) ** j * lo) / (a * (1 - m))
        iterm = j / (a * (m - 1)) * lower[j - 1]
        resid = abs(float(vals[j] - (bterm + iterm)))
        scale = max(abs(float(bterm)), abs(float(iterm)), abs(float(vals[j])), 1e-300)
        if resid > rtol * scale:
            raise AccuracyError(
                f"moment cross-check failed at alpha={alpha}, m={m}, j={j}: "
                f"residual {resid:.3e} against scale {scale:.3e}"
            )


@dataclass(frozen=True)
class MonicRecurrence:
    """Monic orthogonal polynomials of one weight, to degree N+1.

    ``mixed[j, k]`` is the lower-triangular table int mu^j p_k w dmu for
    j <= N+1; ``norms[k] = mixed[k, k]`` with its alpha-derivative in
    ``norms_deriv``.  ``a``/``b`` satisfy
    p_{k+1} = (mu - a_k) p_k - b_k p_{k-1}, with b_k = norms[k]/norms[k-1].
    """

    alpha: float
    order_m: int
    a: np.ndarray
    b: np.ndarray
    norms: np.ndarray
    norms_deriv: np.ndarray
    mixed: np.ndarray

    def eval_poly(self, mu, k):
        return polynomial_eval(self.a, self.b, mu, k)


def monic_recurrence(moments: WeightMoments, N):
    """Orthogonalize the moment sequence through degree N+1.

    Consumes the moment object as given (float64 contract); requires
    moments through j = 2N+2.
    """
    if len(moments.values) < 2 * N + 3:
        raise DomainError(f"need moments through j={2 * N + 2}, have {len(moments.values) - 1}")
    ncols = N + 2
    nrows = N + 2
    mom = moments.values[: nrows + ncols - 1].astype(_LD)[:, None]
    dmom = moments.derivs[: nrows + ncols - 1].astype(_LD)[:, None]
    K, dK = gram_schmidt_table(mom, ncols, nrows, dmom)
    kk = np.arange(ncols)
    a, b = _recurrence_from_table(K)
    return MonicRecurrence(
        alpha=moments.alpha,
        order_m=moments.order_m,
        a=np.asarray(a[:, 0], dtype=float),
        b=np.asarray(b[:, 0], dtype=float),
        norms=np.asarray(K[kk, kk, 0], dtype=float),
        norms_deriv=np.asarray(dK[kk, kk, 0], dtype=float),
        mixed=np.asarray(K[:, :, 0], dtype=float),
    )


@dataclass(frozen=True)
class CouplingCoeffs:
    """Expansion of the closure-weight basis in the regularization-weight basis.

    P_k = alpha * Pt_{k+1} + beta_k * Pt_k
    dP_k/dalpha = -4 * Pt_{k+1} + gamma_k * Pt_k
    """

    alpha: float
    beta: np.ndarray
    gamma: np.ndarray


def coupling_coefficients(alpha, N):
    """beta_k = K_kk / Kt_kk and gamma_k = (dK_kk/dalpha) / Kt_kk, k = 0..N."""
    t = TableSet(alpha, N, need_derivs=True, precise=True)
    return CouplingCoeffs(
        alpha=float(alpha),
        beta=np.asarray(t.beta[: N + 1, 0], dtype=float),
        gamma=np.asarray(t.gamma[: N + 1, 0], dtype=float),
    )


def eval_basis(rec: MonicRecurrence, mu, k):
    """p_k(mu) by the three-term recurrence (multiply by the weight for P_k)."""
    if k >= len(rec.norms):
        raise DomainError(f"polynomial degree {k} beyond table depth {len(rec.norms) - 1}")
    return polynomial_eval(rec.a, rec.b, mu, k)


def weight_value(mu, alpha, order_m=4):
    """The weight (1 + alpha*mu)^-order_m itself."""
    return (1.0 + alpha * np.asarray(mu, dtype=float)) ** (-order_m)
