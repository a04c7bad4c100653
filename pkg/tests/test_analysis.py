"""Quasi-linear assembly, hyperbolicity classification, region scans."""

import io

import numpy as np
import pytest
from scipy.integrate import quad

from radmoment import analysis, basis, closure
from radmoment.closure import MomentState, SpectralCoeffs
from radmoment.errors import SingularMatrixError

from conftest import random_realizable_state


def _weight(mu, alpha, m):
    return (1.0 + alpha * mu) ** (-m)


def random_coeffs(rng, N, alpha=None):
    al = rng.uniform(-0.9, 0.9) if alpha is None else alpha
    f = rng.uniform(-0.5, 0.5, size=N + 1)
    f[0] = rng.uniform(0.2, 2.0)
    f[1] = 0.0
    return SpectralCoeffs(f=f, alpha=float(al))


class TestRegularizedAssembly:
    def test_equilibrium_time_matrix_is_diagonal(self):
        N = 4
        f = np.zeros(N + 1)
        f[0] = 0.7
        w = SpectralCoeffs(f=f, alpha=0.0)
        sys = analysis.assemble_hmpn(w)
        expect = np.eye(N + 1)
        expect[1, 1] = -4.0 * 0.7
        np.testing.assert_allclose(sys.D, expect, atol=1e-13)

    def test_spectrum_equals_characteristic_speeds(self, rng):
        for _ in range(10):
            N = int(rng.integers(1, 7))
            w = random_coeffs(rng, N)
            verdict = analysis.classify(analysis.assemble_hmpn(w))
            lam = basis.characteristic_speeds(w.alpha, N)
            np.testing.assert_allclose(np.sort(verdict.eigenvalues.real), lam, atol=1e-9)
            assert verdict.is_real_diagonalizable

    def test_spectrum_independent_of_f(self, rng):
        N = 5
        al = 0.37
        w1 = random_coeffs(rng, N, alpha=al)
        w2 = random_coeffs(rng, N, alpha=al)
        l1 = np.sort(analysis.classify(analysis.assemble_hmpn(w1)).eigenvalues.real)
        l2 = np.sort(analysis.classify(analysis.assemble_hmpn(w2)).eigenvalues.real)
        np.testing.assert_allclose(l1, l2, atol=1e-10)

    def test_symmetrizer(self, rng):
        # Dt^T Lam Dt SPD and Dt^T Lam Mt Dt symmetric
        for _ in range(8):
            N = 4
            w = random_coeffs(rng, N)
            t = basis.TableSet(w.alpha, N, need_derivs=True)
            Dt = analysis.time_matrix(w, t)
            Mt = analysis.jacobi_matrix(w, tables=t)
            Lam = np.diag(np.asarray(t.kdiag5[: N + 1, 0], dtype=float))
            S1 = Dt.T @ Lam @ Dt
            S2 = Dt.T @ Lam @ Mt @ Dt
            assert np.all(np.linalg.eigvalsh(S1) > 0.0)
            assert np.max(np.abs(S2 - S2.T)) < 1e-10 * max(1.0, np.max(np.abs(S2)))


class TestPlainAssembly:
    def test_order_one_spectra_coincide(self, rng):
        for r in (-0.9, -0.4, 0.1, 0.8):
            w = closure.moments_to_coeffs(MomentState([1.0, r]))
            lam_plain = np.sort(analysis.classify(analysis.assemble_mpn(w)).eigenvalues.real)
            lam_reg = basis.characteristic_speeds(w.alpha, 1)
            np.testing.assert_allclose(lam_plain, lam_reg, atol=1e-10)

    def test_equilibrium_order_two_hyperbolic(self):
        w = closure.moments_to_coeffs(MomentState([1.0, 0.0, 1.0 / 3.0]))
        verdict = analysis.classify(analysis.assemble_mpn(w))
        assert verdict.is_real_diagonalizable
        assert verdict.max_abs_speed < 1.0

    def test_superluminal_region_exists(self):
        # far corner of the admissible rectangle: speeds beyond light
        w = closure.moments_to_coeffs(MomentState([1.0, 0.95, 0.98]))
        verdict = analysis.classify(analysis.assemble_mpn(w))
        assert verdict.max_abs_speed > 1.0

    def test_nonreal_state_found_at_order_three(self):
        w = closure.moments_to_coeffs(MomentState([1.0, 0.9, 0.95, 0.5]))
        verdict = analysis.classify(analysis.assemble_mpn(w))
        assert not verdict.is_real_diagonalizable

    def test_alpha_column_against_quadrature(self, rng):
        # <P_i, dP_k/da> and <P_i, mu dP_k/da> via finite-difference quadrature
        N = 3
        E = random_realizable_state(rng, N)
        w = closure.moments_to_coeffs(MomentState(E))
        sys = analysis.assemble_mpn(w)
        al, h = w.alpha, 1e-6
        jmax = 4 * N + 4
        rec = basis.monic_recurrence(basis.weight_moments(al, 4, jmax), 2 * N)
        recp = basis.monic_recurrence(basis.weight_moments(al + h, 4, jmax), 2 * N)
        recm = basis.monic_recurrence(basis.weight_moments(al - h, 4, jmax), 2 * N)

        def dP(mu, k):
            return (basis.eval_basis(recp, mu, k) * _weight(mu, al + h, 4)
                    - basis.eval_basis(recm, mu, k) * _weight(mu, al - h, 4)) / (2 * h)

        for i in range(N + 1):
            sD = sum(quad(lambda mu, k=k: basis.eval_basis(rec, mu, i) * dP(mu, k),
                          -1, 1, limit=100)[0] * w.f[k]
                     for k in range(N + 1) if w.f[k] != 0.0)
            sB = sum(quad(lambda mu, k=k: basis.eval_basis(rec, mu, i) * mu * dP(mu, k),
                          -1, 1, limit=100)[0] * w.f[k]
                     for k in range(N + 1) if w.f[k] != 0.0)
            assert sys.D[i, 1] == pytest.approx(sD / rec.norms[i], rel=5e-6, abs=5e-7)
            assert sys.B[i, 1] == pytest.approx(sB / rec.norms[i], rel=5e-6, abs=5e-7)


class TestClassify:
    def test_order_one_equilibrium_speeds(self):
        w = closure.moments_to_coeffs(MomentState([1.0, 0.0]))
        verdict = analysis.classify(analysis.assemble_mpn(w))
        np.testing.assert_allclose(
            np.sort(verdict.eigenvalues.real),
            [-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0)], atol=1e-12,
        )

    def test_regularized_always_real(self, rng):
        for _ in range(30):
            N = int(rng.integers(1, 11))
            w = random_coeffs(rng, N)
            verdict = analysis.classify(analysis.assemble_hmpn(w))
            assert verdict.is_real_diagonalizable
            assert verdict.max_abs_speed < 1.0

    def test_singular_matrix_guard(self):
        sys = analysis.QuasiLinearSystem(D=np.array([[1.0, 0.0], [1.0, 1e-18]]),
                                         B=np.eye(2), kind="MPN")
        with pytest.raises(SingularMatrixError):
            analysis.classify(sys)

    def test_jordan_block_not_misread(self):
        # defective matrix with real repeated eigenvalue must classify as non-diagonalizable
        sys = analysis.QuasiLinearSystem(D=np.eye(2),
                                         B=np.array([[0.5, 1.0], [0.0, 0.5]]), kind="MPN")
        verdict = analysis.classify(sys)
        assert not verdict.is_real_diagonalizable


class TestRegionScan:
    def test_order_three_grid(self):
        scan = analysis.scan_real_region(3, e3_over_e0=0.0, resolution=24)
        assert scan.count("nonreal") > 0
        # neighborhood of equilibrium (0, 1/3) stays real
        i = int(np.argmin(np.abs(scan.e1 - 0.0)))
        j = int(np.argmin(np.abs(scan.e2 - 1.0 / 3.0)))
        assert scan.status[i, j] == "real"

    def test_order_two_superluminal_set(self):
        scan = analysis.scan_real_region(2, resolution=24)
        speeds = scan.max_abs_speed[np.isfinite(scan.max_abs_speed)]
        assert np.any(speeds > 1.0)
        i = int(np.argmin(np.abs(scan.e1)))
        j = int(np.argmin(np.abs(scan.e2 - 1.0 / 3.0)))
        assert scan.status[i, j] == "real"
        assert scan.max_abs_speed[i, j] < 1.0

    def test_csv_format(self):
        scan = analysis.scan_real_region(2, resolution=6)
        buf = io.StringIO()
        scan.to_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "# scan N=2 e3_ratio=0"
        assert lines[1] == "e1_ratio,e2_ratio,status,max_abs_speed"
        assert len(lines) == 2 + 36
        first = lines[2].split(",")
        assert first[2] in ("real", "nonreal", "unrealizable")

    def test_rejects_bad_order(self):
        with pytest.raises(ValueError):
            analysis.scan_real_region(5)


class TestGenuineNonlinearity:
    def test_extreme_fields_keep_sign(self, rng):
        # slowest field: speed below the flux ratio and decreasing -> positive;
        # fastest field: speed above the flux ratio and decreasing -> negative
        for _ in range(100):
            N = int(rng.integers(2, 6))
            w = random_coeffs(rng, N)
            lo = analysis.genuine_nonlinearity_indicator(w, 0)
            hi = analysis.genuine_nonlinearity_indicator(w, N)
            assert lo > 0.0
            assert hi < 0.0

    def test_interior_field_changes_sign(self):
        N, k = 3, 1
        vals = []
        for al in np.linspace(-0.9, 0.9, 41):
            f = np.zeros(N + 1)
            f[0] = 1.0
            w = SpectralCoeffs(f=f, alpha=float(al))
            vals.append(analysis.genuine_nonlinearity_indicator(w, k))
        vals = np.array(vals)
        assert np.any(vals > 0) and np.any(vals < 0)
