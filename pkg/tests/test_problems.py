"""Benchmark constructors and exact-solution evaluators."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import roots_legendre

from radmoment import closure, problems
from radmoment.closure import MomentState, Realizability
from radmoment.errors import UnknownProblem
from radmoment.problems import (
    antidiffusive_exact,
    antidiffusive_exact_moments,
    make_problem,
    riemann_free_stream_exact,
    riemann_shape_unnormalized,
    riemann_weight_norm,
)


class TestConstructors:
    def test_unknown_name(self):
        with pytest.raises(UnknownProblem):
            make_problem("lattice")

    def test_riemann_left_doubles_right(self):
        p = make_problem("riemann")
        z = np.array([-0.25, 0.25])
        E = p.initial_moments(z, 3)
        np.testing.assert_allclose(E[:, 0], 2.0 * E[:, 1], rtol=1e-14)
        assert E[0, 1] == pytest.approx(1.0, rel=1e-12)  # normalized to a c

    def test_riemann_normalization(self):
        w0 = riemann_weight_norm()
        total = quad(lambda mu: w0 * riemann_shape_unnormalized(mu), -1, 1, limit=200)[0]
        assert total == pytest.approx(1.0, rel=1e-10)

    def test_continuous_beam_flux_ratio(self):
        p = make_problem("continuous_beam")
        z = np.linspace(-0.4, 0.4, 11)
        E = p.initial_moments(z, 4)
        np.testing.assert_allclose(E[1] / E[0], 0.9, rtol=1e-14)
        # delta moments: E0 = 0.5 ac, Ek = 0.45 ac for k >= 1, scaled by the ramp
        at_left = p.initial_moments(np.array([-0.4]), 2)[:, 0]
        np.testing.assert_allclose(at_left, 6.0 * np.array([0.5, 0.45, 0.45]), rtol=1e-14)

    def test_continuous_beam_profile_is_continuous(self):
        p = make_problem("continuous_beam")
        for knee in (-0.1, 0.1):
            lo = p.initial_moments(np.array([knee - 1e-9]), 0)[0, 0]
            hi = p.initial_moments(np.array([knee + 1e-9]), 0)[0, 0]
            assert lo == pytest.approx(hi, rel=1e-6)

    def test_su_olson_setup(self):
        p = make_problem("su_olson")
        assert (p.z_left, p.z_right) == (0.0, 30.0)
        z = np.array([0.25, 0.5, 0.75])
        np.testing.assert_allclose(p.material.source(z), [1.0, 1.0, 0.0])
        assert p.bc_left.kind == "reflective"
        assert p.bc_right.kind == "vacuum"
        assert p.material.energy_law.e_of_T(2.0) == pytest.approx(16.0)

    def test_two_beam_setup(self):
        p = make_problem("two_beam")
        z = np.array([0.5])
        assert float(p.material.sigma_a(z, None)[0]) == 2.0
        assert p.bc_left.kind == "inflow"
        assert float(p.bc_left.inflow_at(np.array([0.5]))[0]) == 0.5
        assert p.steady

    def test_gaussian_domain_tracks_end_time(self):
        p = make_problem("gaussian", t_end=2.0)
        assert (p.z_left, p.z_right) == (-3.0, 3.0)

    def test_all_initials_realizable(self, rng):
        for name in problems.PROBLEM_NAMES:
            p = make_problem(name)
            z = np.linspace(p.z_left + 1e-3, p.z_right - 1e-3, 17)
            E = p.initial_moments(z, 4)
            for i in range(len(z)):
                rep = closure.realizability_check(MomentState(E[:, i]))
                assert rep.status is Realizability.OK, (name, i)

    def test_legendre_and_moment_initials_agree(self):
        # G u == E for the separable initial data
        from radmoment.solver import _legendre_moment_matrix

        for name in problems.PROBLEM_NAMES:
            p = make_problem(name)
            z = np.linspace(p.z_left + 1e-3, p.z_right - 1e-3, 9)
            N = 5
            E = p.initial_moments(z, N)
            u = p.initial_legendre(z, N)
            G = _legendre_moment_matrix(N)[: N + 1]
            np.testing.assert_allclose(G @ u, E, rtol=1e-11, atol=1e-13)


class TestRiemannExact:
    def test_initial_time(self):
        p = make_problem("riemann")
        E = p.initial_moments(np.array([-0.2, 0.2]), 0)
        assert riemann_free_stream_exact(-0.2, 0.0, 0) == pytest.approx(E[0, 0], rel=1e-10)
        assert riemann_free_stream_exact(0.2, 0.0, 0) == pytest.approx(E[0, 1], rel=1e-10)

    def test_domain_of_dependence(self):
        assert riemann_free_stream_exact(-0.5, 0.1, 0) == pytest.approx(2.0, rel=1e-10)
        assert riemann_free_stream_exact(0.5, 0.1, 0) == pytest.approx(1.0, rel=1e-10)

    def test_refined_quadrature_oracle(self):
        # 10^4-node fixed composite Gauss rule (split at the traveling jump)
        z, t, k = 0.0, 0.1, 0
        val = riemann_free_stream_exact(z, t, k)
        w0 = riemann_weight_norm()
        mustar = z / t
        xg, wg = roots_legendre(100)

        def I0(m):
            return w0 * riemann_shape_unnormalized(m)

        def panel_gauss(a, b, weight_factor):
            edges = np.linspace(a, b, 51)
            total = 0.0
            for lo, hi in zip(edges[:-1], edges[1:]):
                mids = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
                total += 0.5 * (hi - lo) * float((wg * weight_factor * I0(mids) * mids**k).sum())
            return total

        fixed = panel_gauss(-1.0, mustar, 1.0) + panel_gauss(mustar, 1.0, 2.0)
        assert val == pytest.approx(fixed, abs=1e-8)

    def test_energy_balance_over_disturbed_region(self):
        # on an interval containing the whole disturbance, the change of
        # int E0 dz equals t times the boundary-flux imbalance (the left
        # state carries twice the base flux E1)
        t = 0.05
        xg, wg = roots_legendre(60)
        total = 0.0
        # the evolved profile is smooth between the kinks at z = -ct, +ct
        for a, b in ((-0.2, -t), (-t, t), (t, 0.2)):
            zs = 0.5 * (b - a) * xg + 0.5 * (b + a)
            vals = np.array([riemann_free_stream_exact(z, t, 0) for z in zs])
            total += 0.5 * (b - a) * float((wg * vals).sum())
        total0 = 2.0 * 0.2 + 1.0 * 0.2  # exact integral of the step profile
        flux_left = riemann_free_stream_exact(-0.2, 0.0, 1)   # E1 of the doubled state
        flux_right = riemann_free_stream_exact(0.2, 0.0, 1)   # E1 of the base state
        assert total - total0 == pytest.approx(t * (flux_left - flux_right), abs=1e-8)


class TestAntidiffusiveExact:
    def test_region_constants(self):
        assert antidiffusive_exact(-0.5, 0.7) == pytest.approx(0.275)
        assert antidiffusive_exact(0.5, -0.7) == pytest.approx(0.1)

    def test_mid_region_value(self):
        z, mu = 0.05, 0.5
        expect = 0.275 * np.exp(-z / mu) + (1.0 - np.exp(-z / mu))
        assert antidiffusive_exact(z, mu) == pytest.approx(expect, rel=1e-14)

    def test_continuity_at_interfaces(self):
        for mu in np.linspace(0.05, 0.95, 10):
            a = antidiffusive_exact(-1e-12, mu)
            b = antidiffusive_exact(+1e-12, mu)
            assert a == pytest.approx(b, rel=1e-9)
        for mu in np.linspace(-0.95, -0.05, 10):
            a = antidiffusive_exact(0.1 - 1e-12, mu)
            b = antidiffusive_exact(0.1 + 1e-12, mu)
            assert a == pytest.approx(b, rel=1e-9)

    def test_mu_zero_rejected(self):
        with pytest.raises(ValueError):
            antidiffusive_exact(0.05, 0.0)

    def test_moments_match_direct_quadrature(self):
        for z in (-0.5, 0.05, 0.8):
            m0 = antidiffusive_exact_moments(z, 0)
            left = quad(lambda mu: antidiffusive_exact(z, mu), -1, -1e-12, limit=200)[0]
            right = quad(lambda mu: antidiffusive_exact(z, mu), 1e-12, 1, limit=200)[0]
            assert m0 == pytest.approx(left + right, rel=1e-6)

    def test_transport_equation_residual(self):
        # mu dI/dz + I = T^4 pointwise inside the middle region
        z, mu, h = 0.05, 0.33, 1e-6
        dI = (antidiffusive_exact(z + h, mu) - antidiffusive_exact(z - h, mu)) / (2 * h)
        I = antidiffusive_exact(z, mu)
        assert mu * dI + I == pytest.approx(1.0, rel=1e-8)


class TestSuOlsonEnergyBookkeeping:
    def test_total_energy_matches_injected_source(self):
        # sum of e + E0/c over the domain equals the time integral of the
        # (discretely sampled) source once the floor is subtracted
        from radmoment.config import SolverConfig
        from radmoment.solver import run

        prob = make_problem("su_olson")
        t_end = 1.0
        cfg = SolverConfig(model="hmpn", order=4, problem="su_olson",
                           n_cells=2000, t_end=t_end)
        res = run(prob, cfg)
        grid = res.final.grid
        z = grid.centers()
        total = float((res.final.e + res.final.E[0]).sum() * grid.dz)
        initial = float(prob.initial_moments(z, 0)[0].sum() * grid.dz)
        injected = float(prob.material.source(z).sum() * grid.dz) * t_end
        assert total - initial == pytest.approx(injected, rel=1e-6)
