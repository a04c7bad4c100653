"""Closure conversions, flux, regularization multipliers, realizability."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import roots_legendre

from radmoment import basis, closure
from radmoment.closure import MomentState, Realizability, SpectralCoeffs
from radmoment.errors import DomainError, RealizabilityError, RealizabilityWarning

from conftest import random_realizable_state


class TestAlphaFromFluxRatio:
    def test_equilibrium(self):
        assert closure.alpha_from_flux_ratio(0.0) == 0.0

    def test_direct_value_and_root_oracle(self):
        # oracle: the alpha at which the weight's own flux ratio equals r
        r = 0.5
        alpha = closure.alpha_from_flux_ratio(r)
        assert alpha == pytest.approx(-0.39444872, abs=1e-8)

        def ratio_mismatch(a):
            m0 = quad(lambda u: (1 + a * u) ** -4, -1, 1)[0]
            m1 = quad(lambda u: u * (1 + a * u) ** -4, -1, 1)[0]
            return m1 / m0 - r

        assert alpha == pytest.approx(brentq(ratio_mismatch, -0.99, 0.99), abs=1e-12)

    def test_odd_symmetry(self):
        assert closure.alpha_from_flux_ratio(-0.5) == -closure.alpha_from_flux_ratio(0.5)

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            closure.alpha_from_flux_ratio(float("nan"))

    def test_clamp_warns(self):
        with pytest.warns(RealizabilityWarning):
            a = closure.alpha_from_flux_ratio(1.5)
        assert abs(a) < 1.0

    def test_flux_ratio_reproduced(self, rng):
        # alpha(r) is exactly the inverse of the weight flux ratio
        for r in rng.uniform(-0.97, 0.97, size=25):
            a = closure.alpha_from_flux_ratio(float(r))
            t = basis.TableSet(a, 1, need_derivs=False)
            assert float(t.flux_ratio()[0]) == pytest.approx(float(r), abs=1e-14)


class TestConversions:
    def test_isotropic_equilibrium(self):
        w = closure.moments_to_coeffs(MomentState([1.0, 0.0, 1.0 / 3.0]))
        assert w.alpha == 0.0
        assert w.f[0] == pytest.approx(0.5, rel=1e-14)
        assert w.f[1] == 0.0
        assert w.f[2] == pytest.approx(0.0, abs=1e-15)

    def test_vanishing_second_moment(self):
        w = closure.moments_to_coeffs(MomentState([1.0, 0.0, 0.0]))
        assert w.f[2] == pytest.approx(-15.0 / 8.0, rel=1e-13)

    def test_roundtrip_random_states(self, rng):
        for N in (1, 2, 3, 5, 8):
            for _ in range(40):
                E = random_realizable_state(rng, N)
                w = closure.moments_to_coeffs(MomentState(E))
                back = closure.coeffs_to_moments(w).E
                np.testing.assert_allclose(back, E, rtol=1e-11, atol=1e-13 * abs(E[0]))

    def test_f1_vanishes_thousand_states(self, rng):
        for _ in range(1000):
            N = int(rng.integers(1, 7))
            E = random_realizable_state(rng, N)
            w = closure.moments_to_coeffs(MomentState(E))
            assert w.f[1] == 0.0

    def test_coeff_to_moment_flat_intensity(self):
        N = 5
        w = SpectralCoeffs(f=[0.5] + [0.0] * N, alpha=0.0)
        E = closure.coeffs_to_moments(w).E
        k = np.arange(N + 1)
        np.testing.assert_allclose(E, np.where(k % 2 == 0, 1.0 / (k + 1.0), 0.0), atol=1e-15)

    def test_pure_weight_moments(self):
        # a single f0 against the weight reproduces the weight moments
        N = 4
        w = SpectralCoeffs(f=[1.0] + [0.0] * N, alpha=0.3)
        E = closure.coeffs_to_moments(w).E
        wm = basis.weight_moments(0.3, 4, N)
        np.testing.assert_allclose(E, wm.values, rtol=1e-13)

    def test_rejects_nonrealizable(self):
        with pytest.raises(RealizabilityError):
            closure.moments_to_coeffs(MomentState([-1.0, 0.0]))
        with pytest.raises(RealizabilityError):
            closure.moments_to_coeffs(MomentState([1.0, 1.1]))


class TestClosureFlux:
    def test_isotropic_eddington(self):
        F = closure.closure_flux(MomentState([1.0, 0.0]))
        np.testing.assert_allclose(F, [0.0, 1.0 / 3.0], atol=1e-14)

    def test_against_quadrature_oracle(self):
        # N = 1: E2/E0 is the normalized second moment of the bare weight
        for r in (-0.8, -0.3, 0.2, 0.65):
            F = closure.closure_flux(MomentState([2.0, 2.0 * r]))
            a = closure.alpha_from_flux_ratio(r)
            num = quad(lambda u: u * u * (1 + a * u) ** -4, -1, 1)[0]
            den = quad(lambda u: (1 + a * u) ** -4, -1, 1)[0]
            assert F[1] / 2.0 == pytest.approx(num / den, rel=1e-10)

    def test_even_ansatz_zero_odd_closure(self):
        F = closure.closure_flux(MomentState([1.0, 0.0, 1.0 / 3.0]))
        assert F[2] == pytest.approx(0.0, abs=1e-14)

    def test_scaling_invariance(self, rng):
        for _ in range(25):
            N = int(rng.integers(1, 6))
            E = random_realizable_state(rng, N)
            c = rng.uniform(0.1, 10.0)
            F1 = closure.closure_flux(MomentState(E))
            F2 = closure.closure_flux(MomentState(c * E))
            np.testing.assert_allclose(F2, c * F1, rtol=1e-11)

    def test_eddington_limits(self):
        # even in r, 1/3 at equilibrium, -> 1 toward the beam limit
        vals = {}
        for r in (-0.999, -0.5, 0.0, 0.5, 0.999):
            F = closure.closure_flux(MomentState([1.0, r]))
            vals[r] = F[1]
        assert vals[0.0] == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert vals[0.5] == pytest.approx(vals[-0.5], rel=1e-12)
        assert vals[0.999] == pytest.approx(vals[-0.999], rel=1e-12)
        assert vals[0.999] > 0.95


class TestRegularizationMultipliers:
    def test_vanishes_for_order_one(self):
        w = closure.moments_to_coeffs(MomentState([1.0, 0.4]))
        cf, ca = closure.regularization_multipliers(w)
        assert ca == 0.0  # f_N = f_1 = 0 identically

    def test_flat_weight_cf_zero(self):
        w = closure.moments_to_coeffs(MomentState([1.0, 0.0, 0.2, 0.0]))
        cf, ca = closure.regularization_multipliers(w)
        assert cf == 0.0

    def test_matches_table_oracle(self):
        w = SpectralCoeffs(f=[0.5, 0.0, 0.1], alpha=0.3)
        cf, ca = closure.regularization_multipliers(w)
        wm = basis.weight_moments(0.3, 5, 8)
        rec = basis.monic_recurrence(wm, 2)
        norm = rec.norms[3]
        assert cf == pytest.approx(norm * 0.3, rel=1e-12)
        assert ca == pytest.approx(norm * -0.4, rel=1e-12)


class TestAnsatzEval:
    def test_flat_half(self):
        w = SpectralCoeffs(f=[0.5, 0.0, 0.0], alpha=0.0)
        for mu in (-0.9, 0.0, 0.77):
            assert closure.ansatz_eval(w, mu) == pytest.approx(0.5, rel=1e-14)

    def test_weight_at_origin(self):
        w = SpectralCoeffs(f=[1.0, 0.0, 0.0], alpha=0.5)
        assert closure.ansatz_eval(w, 0.0) == pytest.approx(1.0, rel=1e-14)

    def test_moment_constraints_by_quadrature(self, rng):
        x, wq = roots_legendre(64)
        for _ in range(10):
            N = int(rng.integers(1, 6))
            E = random_realizable_state(rng, N)
            w = closure.moments_to_coeffs(MomentState(E))
            I = closure.ansatz_eval(w, x)
            for k in range(N + 1):
                assert (wq * x**k * I).sum() == pytest.approx(E[k], rel=1e-10, abs=1e-10)


class TestRealizabilityCheck:
    def test_ok(self):
        rep = closure.realizability_check(MomentState([1.0, 0.0, 1.0 / 3.0]))
        assert rep.status is Realizability.OK
        assert bool(rep)

    def test_violated_energy(self):
        rep = closure.realizability_check(MomentState([-1.0, 0.0]))
        assert rep.status is Realizability.VIOLATED
        assert rep.index == 0
        assert not bool(rep)

    def test_violated_flux(self):
        rep = closure.realizability_check(MomentState([1.0, 1.0]))
        assert rep.status is Realizability.VIOLATED
        assert rep.index == 1

    def test_clamped_boundary(self):
        rep = closure.realizability_check(MomentState([1.0, 1.0 - 1e-12]))
        assert rep.status is Realizability.CLAMPED


class TestCoefficientRoundtrip:
    def test_coeffs_to_moments_and_back(self, rng):
        # any coefficient vector with the structural zero slot lies on the
        # closure manifold (E1/E0 = weight flux ratio automatically), so the
        # reverse composition is the identity on coefficients
        for _ in range(40):
            N = int(rng.integers(1, 8))
            f = rng.uniform(-0.5, 0.5, size=N + 1)
            f[0] = rng.uniform(0.2, 2.0)
            if N >= 1:
                f[1] = 0.0
            w = SpectralCoeffs(f=f, alpha=float(rng.uniform(-0.9, 0.9)))
            back = closure.moments_to_coeffs(closure.coeffs_to_moments(w))
            assert back.alpha == pytest.approx(w.alpha, abs=2e-13)
            scale = float(np.max(np.abs(w.f)))
            np.testing.assert_allclose(back.f, w.f, rtol=1e-11, atol=1e-11 * scale)
