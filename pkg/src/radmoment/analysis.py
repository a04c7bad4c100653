"""Quasi-linear structure and hyperbolicity diagnostics.

Assembles the matrices of both models in the closure variables
w = (f_0, alpha, f_2, ..., f_N):

* regularized (HMPN): time matrix Dt with the two-band structure driven
  by (beta_k, gamma_k, alpha, f), space matrix Mt @ Dt where Mt is the
  Jacobi matrix of the regularization-weight polynomials.  Symmetric
  hyperbolic for every admissible state; spectrum = the characteristic
  speeds, independent of f.
* plain (MPN): D and B with the alpha-column built from the inner
  products <P_i, dP_k/dalpha> and <P_i, mu dP_k/dalpha>, reduced to
  cross-family integrals T[i, k] = int p_i pt_k w5 dmu by the coupling
  identities -- no quadrature anywhere.

``classify`` decides real diagonalizability, ``scan_real_region``
reproduces the hyperbolicity-region and speed-contour maps over moment
ratios, and ``genuine_nonlinearity_indicator`` samples the sign of
grad(lambda_k) . r_k along the alpha direction.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import basis, closure
from .basis import TableSet
from .closure import SpectralCoeffs
from .errors import RealizabilityError, SingularMatrixError

_IM_TOL = 1e-8
_RANK_DROP = 1e-10
ALPHA_CAP = basis.ALPHA_LIMIT


@dataclass(frozen=True)
class QuasiLinearSystem:
    """Matrices of D dw/dt + B dw/dz = 0 at one state."""

    D: np.ndarray
    B: np.ndarray
    kind: str  # "MPN" or "HMPN"


@dataclass(frozen=True)
class HyperbolicityVerdict:
    eigenvalues: np.ndarray
    is_real_diagonalizable: bool
    max_abs_speed: float


def _tables_for(w: SpectralCoeffs, need_derivs=True):
    return TableSet(w.alpha, w.N, need_derivs=need_derivs, precise=True)


def time_matrix(w: SpectralCoeffs, tables=None):
    """The regularized time matrix Dt (two-band lower structure)."""
    t = tables or _tables_for(w)
    N, al = w.N, w.alpha
    f = w.f
    beta = np.asarray(t.beta[:, 0], dtype=float)
    gamma = np.asarray(t.gamma[:, 0], dtype=float)
    Dt = np.zeros((N + 1, N + 1))
    Dt[0, 0] = beta[0]
    if N >= 1:
        Dt[0, 1] = gamma[0] * f[0]
        Dt[1, 0] = al
        Dt[1, 1] = -4.0 * f[0]
    for i in range(2, N + 1):
        # column 1 couples to alpha; f[1] = 0 kills the -4 f_1 term at i = 2
        Dt[i, 1] = gamma[i] * f[i] - 4.0 * f[i - 1]
        Dt[i, i] = beta[i]
        if i >= 3:
            Dt[i, i - 1] = al
    return Dt


def jacobi_matrix(w_or_alpha, N=None, tables=None):
    """Monic-form Jacobi matrix Mt of the regularization weight.

    Subdiagonal 1, diagonal a_k, superdiagonal b_{k+1}; its
    characteristic polynomial is the degree-(N+1) orthogonal polynomial,
    so its spectrum is the characteristic speeds.
    """
    if isinstance(w_or_alpha, SpectralCoeffs):
        alpha, N = w_or_alpha.alpha, w_or_alpha.N
    else:
        alpha = float(w_or_alpha)
    t = tables or TableSet(alpha, N, need_derivs=False, precise=True)
    a = np.asarray(t.a5[: N + 1, 0], dtype=float)
    b = np.asarray(t.b5[: N + 2, 0], dtype=float)
    Mt = np.zeros((N + 1, N + 1))
    for i in range(N + 1):
        Mt[i, i] = a[i]
        if i + 1 <= N:
            Mt[i, i + 1] = b[i + 1]
        if i >= 1:
            Mt[i, i - 1] = 1.0
    return Mt


def assemble_hmpn(w: SpectralCoeffs) -> QuasiLinearSystem:
    """Regularized system: D = Dt, B = Mt @ Dt."""
    if w.f[0] <= 0.0:
        raise RealizabilityError("f0 must be positive", index=0)
    t = _tables_for(w)
    Dt = time_matrix(w, t)
    Mt = jacobi_matrix(w, tables=t)
    return QuasiLinearSystem(D=Dt, B=Mt @ Dt, kind="HMPN")


def cross_family_table(tables, N):
    """T[i, k] = int p_i pt_k w5 dmu for i, k <= N (zero for k > i).

    Recursion over i couples both recurrences:
    T[i+1, k] = T[i, k+1] + a5_k T[i, k] + b5_k T[i, k-1]
                - a4_i T[i, k] - b4_i T[i-1, k]
    seeded by T[0, 0] = m5_0.  Vectorized over the table cell axis.
    """
    a4 = np.asarray(tables.a4, dtype=float)
    b4 = np.asarray(tables.b4, dtype=float)
    a5 = np.asarray(tables.a5, dtype=float)
    b5 = np.asarray(tables.b5, dtype=float)
    M = a4.shape[-1]
    T = np.zeros((N + 1, N + 2, M))
    T[0, 0] = np.asarray(tables.m5[0], dtype=float)
    for i in range(N):
        for k in range(i + 2):
            v = T[i, k + 1] if k + 1 <= N + 1 else 0.0
            v = v + a5[k] * T[i, k]
            if k >= 1:
                v = v + b5[k] * T[i, k - 1]
            v = v - a4[i] * T[i, k]
            if i >= 1:
                v = v - b4[i] * T[i - 1, k]
            T[i + 1, k] = v
    return T


def mpn_system_batch(tables, f):
    """Quasi-linear (D, B) of the plain model for a block of states.

    Rows i = 0..N; columns follow w = (f_0, alpha, f_2, ..., f_N).
    Off-alpha columns carry the Jacobi structure of the closure weight;
    the alpha column contracts the basis derivatives against f, reduced
    to the cross-family table (no quadrature).  Returns (M, n, n) pairs.
    """
    if tables.gamma is None:
        raise ValueError("plain-model assembly needs derivative tables")
    N = tables.N
    ff = np.asarray(f, dtype=float)
    M = ff.shape[-1]
    a4 = np.asarray(tables.a4, dtype=float)
    b4 = np.asarray(tables.b4, dtype=float)
    a5 = np.asarray(tables.a5, dtype=float)
    b5 = np.asarray(tables.b5, dtype=float)
    gamma = np.asarray(tables.gamma, dtype=float)
    kdiag = np.asarray(tables.kdiag4, dtype=float)
    T = cross_family_table(tables, N)

    def T_at(i, k):
        if 0 <= k <= i:
            return T[i, k]
        return np.zeros(M)

    D = np.zeros((M, N + 1, N + 1))
    B = np.zeros((M, N + 1, N + 1))
    D[:] = np.eye(N + 1)
    for i in range(N + 1):
        for j in range(N + 1):
            if j == 1:
                continue
            if j == i:
                B[:, i, j] = a4[i]
            elif j == i + 1:
                B[:, i, j] = b4[i + 1]
            elif j == i - 1:
                B[:, i, j] = 1.0
    for i in range(N + 1):
        dsum = np.zeros(M)
        bsum = np.zeros(M)
        for k in range(N + 1):
            if k == 1:
                continue  # f_1 = 0
            t0, t1, t2 = T_at(i, k), T_at(i, k + 1), T_at(i, k + 2)
            tm = T_at(i, k - 1)
            # <P_i, dP_k/dalpha> = -4 T[i,k+1] + gamma_k T[i,k]
            dsum += (-4.0 * t1 + gamma[k] * t0) * ff[k]
            # <P_i, mu dP_k/dalpha> expands mu pt_l by the w5 recurrence
            mu1 = t2 + a5[k + 1] * t1 + b5[k + 1] * t0
            mu0 = t1 + a5[k] * t0 + (b5[k] * tm if k >= 1 else 0.0)
            bsum += (-4.0 * mu1 + gamma[k] * mu0) * ff[k]
        if N >= 1:
            D[:, i, 1] = dsum / kdiag[i]
            B[:, i, 1] = bsum / kdiag[i]
    return D, B


def assemble_mpn(w: SpectralCoeffs) -> QuasiLinearSystem:
    """Plain-closure system at one state."""
    if w.f[0] <= 0.0:
        raise RealizabilityError("f0 must be positive", index=0)
    t = _tables_for(w)
    D, B = mpn_system_batch(t, w.f[:, None])
    return QuasiLinearSystem(D=D[0], B=B[0], kind="MPN")


def system_matrix(system: QuasiLinearSystem):
    """A = D^-1 B, guarding against a numerically singular D."""
    if np.linalg.cond(system.D) > 1e14:
        raise SingularMatrixError("time matrix is numerically singular")
    return np.linalg.solve(system.D, system.B)


def classify(system: QuasiLinearSystem) -> HyperbolicityVerdict:
    """Real diagonalizability of D^-1 B.

    Eigenvalues with |Im| beyond 1e-8*max(1, |lambda|) mark the state
    non-hyperbolic; clustered real eigenvalues get an eigenvector-count
    check (rank of A - lambda I with a 1e-10 drop tolerance), so Jordan
    blocks at the region boundary are not misread as diagonalizable.
    """
    A = system_matrix(system)
    lam = np.linalg.eigvals(A)
    order = np.argsort(lam.real)
    lam = lam[order]
    scale = np.maximum(1.0, np.abs(lam))
    ok = bool(np.all(np.abs(lam.imag) <= _IM_TOL * scale))
    if ok:
        # check geometric multiplicity on clusters of (near-)repeated roots
        vals = lam.real
        n = len(vals)
        used = np.zeros(n, dtype=bool)
        for i in range(n):
            if used[i]:
                continue
            cluster = np.abs(vals - vals[i]) <= _IM_TOL * max(1.0, abs(vals[i]))
            mult = int(np.sum(cluster))
            used |= cluster
            if mult > 1:
                sv = np.linalg.svd(A - vals[i] * np.eye(n), compute_uv=False)
                rank = int(np.sum(sv > _RANK_DROP * max(sv[0], 1.0)))
                if rank > n - mult:
                    ok = False
                    break
    return HyperbolicityVerdict(
        eigenvalues=lam,
        is_real_diagonalizable=ok,
        max_abs_speed=float(np.max(np.abs(lam.real))),
    )


# ---------------------------------------------------------------------------
# region scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionScan:
    N: int
    e3_over_e0: float
    e1: np.ndarray           # grid axis, flux ratio E1/E0
    e2: np.ndarray           # grid axis, ratio E2/E0
    status: np.ndarray       # (len(e1), len(e2)) of {"real","nonreal","unrealizable"}
    max_abs_speed: np.ndarray

    def count(self, label):
        return int(np.sum(self.status == label))

    def to_csv(self, path_or_buf):
        """Grid in deterministic row-major order with the scan header."""
        buf = path_or_buf if hasattr(path_or_buf, "write") else io.StringIO()
        buf.write(f"# scan N={self.N} e3_ratio={self.e3_over_e0:g}\n")
        buf.write("e1_ratio,e2_ratio,status,max_abs_speed\n")
        for i, x in enumerate(self.e1):
            for j, y in enumerate(self.e2):
                s = self.max_abs_speed[i, j]
                sval = "nan" if not np.isfinite(s) else f"{s:.17g}"
                buf.write(f"{x:.17g},{y:.17g},{self.status[i, j]},{sval}\n")
        if buf is not path_or_buf:
            text = buf.getvalue()
            with open(path_or_buf, "w") as fh:
                fh.write(text)


def scan_real_region(N, e3_over_e0=0.0, e1_range=(-0.99, 0.99),
                     e2_range=(0.005, 0.995), resolution=100) -> RegionScan:
    """Classify the plain closure over a grid of moment ratios.

    N = 2 scans (E1/E0, E2/E0); N = 3 holds E3/E0 fixed as well.
    Points where the coefficient inversion fails are marked
    unrealizable rather than raising.  Points are processed in
    vectorized chunks; clustered real spectra fall back to the careful
    scalar classification so Jordan blocks on the region boundary are
    not misread.
    """
    if N not in (2, 3):
        raise ValueError("region scans are defined for N in {2, 3}")
    e1 = np.linspace(*e1_range, resolution)
    e2 = np.linspace(*e2_range, resolution)
    status = np.empty((resolution, resolution), dtype=object)
    speed = np.full((resolution, resolution), np.nan)
    X, Y = np.meshgrid(e1, e2, indexing="ij")
    pts = resolution * resolution
    Eflat = np.empty((N + 1, pts))
    Eflat[0] = 1.0
    Eflat[1] = X.ravel()
    Eflat[2] = Y.ravel()
    if N == 3:
        Eflat[3] = e3_over_e0
    stat_flat = np.empty(pts, dtype=object)
    speed_flat = np.full(pts, np.nan)
    chunk = 4000
    for lo in range(0, pts, chunk):
        sel = slice(lo, min(lo + chunk, pts))
        try:
            _scan_chunk(Eflat[:, sel], N, stat_flat[sel], speed_flat[sel])
        except (RealizabilityError, SingularMatrixError):
            # per-point fallback for chunks containing inadmissible states
            for idx in range(sel.start, sel.stop):
                _scan_point(Eflat[:, idx], N, stat_flat, speed_flat, idx)
    status[:, :] = stat_flat.reshape(resolution, resolution)
    speed[:, :] = speed_flat.reshape(resolution, resolution)
    return RegionScan(N=N, e3_over_e0=float(e3_over_e0), e1=e1, e2=e2,
                      status=status, max_abs_speed=speed)


def _scan_chunk(E, N, stat_out, speed_out):
    tables = closure.tables_for_moments(E, N, clamp=False, precise=True,
                                        need_derivs=True)
    f = closure.coeffs_vec(E, tables)
    D, B = mpn_system_batch(tables, f)
    lam = np.linalg.eigvals(np.linalg.solve(D, B))
    scale = np.maximum(1.0, np.abs(lam)).max(axis=1)
    nonreal = np.abs(lam.imag).max(axis=1) > _IM_TOL * scale
    speed_out[:] = np.abs(lam.real).max(axis=1)
    stat_out[:] = np.where(nonreal, "nonreal", "real")
    # real spectra with clustered roots need the eigenvector-count check
    lr = np.sort(lam.real, axis=1)
    gap = np.diff(lr, axis=1).min(axis=1) if lr.shape[1] > 1 else np.full(len(lr), np.inf)
    suspicious = ~nonreal & (gap <= _IM_TOL * scale)
    for idx in np.nonzero(suspicious)[0]:
        verdict = classify(QuasiLinearSystem(D=D[idx], B=B[idx], kind="MPN"))
        stat_out[idx] = "real" if verdict.is_real_diagonalizable else "nonreal"
        speed_out[idx] = verdict.max_abs_speed


def _scan_point(E, N, stat_flat, speed_flat, idx):
    try:
        w = closure.moments_to_coeffs(closure.MomentState(E))
        verdict = classify(assemble_mpn(w))
    except (RealizabilityError, SingularMatrixError):
        stat_flat[idx] = "unrealizable"
        return
    stat_flat[idx] = "real" if verdict.is_real_diagonalizable else "nonreal"
    speed_flat[idx] = verdict.max_abs_speed


# ---------------------------------------------------------------------------
# characteristic fields
# ---------------------------------------------------------------------------


def genuine_nonlinearity_indicator(w: SpectralCoeffs, k, step=1e-6):
    """Sign proxy for grad_w(lambda_k) . r_k at the state w.

    The speeds depend on alpha alone, so the gradient points along the
    alpha slot and the indicator reduces to
    (d lambda_k / d alpha) * (lambda_k - E1/E0), with the derivative by
    central differences.  Fields k = 0 and k = N keep one sign; interior
    fields change sign as alpha sweeps.
    """
    al, N = w.alpha, w.N
    lam = basis.characteristic_speeds(al, N)
    lp = basis.characteristic_speeds(min(al + step, ALPHA_CAP), N)
    lm = basis.characteristic_speeds(max(al - step, -ALPHA_CAP), N)
    dlam = (lp[k] - lm[k]) / (2.0 * step)
    t = TableSet(al, 1, need_derivs=False, precise=True)
    r = float(t.flux_ratio()[0])
    return float(dlam * (lam[k] - r))
