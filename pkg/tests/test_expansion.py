import math

import numpy as np
import pytest

from toadfront.dispersion import spectral_data
from toadfront.expansion import (
    GaussianDipole,
    TraitOperator,
    assemble_S,
    build_expansion,
    compare_xi_S,
    halfline_dipole_oracle,
    moving_boundary_criticality,
    residual_of_S,
)
from toadfront.grids import ThetaDomain, sample_profile
from toadfront.solver import log_gradient_coefficient


@pytest.fixture(scope="module")
def const_spectral():
    return spectral_data(sample_profile("const 1", ThetaDomain(1.0, 2.0, 64)))


@pytest.fixture(scope="module")
def theta_spectral():
    return spectral_data(sample_profile("theta", ThetaDomain(1.0, 2.0, 256)))


@pytest.fixture(scope="module")
def theta_expansion(theta_spectral):
    return build_expansion(theta_spectral, omega_bar=0.75)


class TestGaussianDipole:
    def test_values_and_derivatives(self):
        s0 = GaussianDipole(1.0)
        z = np.linspace(0, 4, 41)
        f = z * np.exp(-z * z / 4)
        assert np.allclose(s0(z, 0), f)
        h = 1e-5
        fd = (s0(z + h, 0) - s0(z - h, 0)) / (2 * h)
        assert np.allclose(s0(z, 1), fd, atol=1e-9)
        fd2 = (s0(z + h, 1) - s0(z - h, 1)) / (2 * h)
        assert np.allclose(s0(z, 2), fd2, atol=1e-9)

    def test_radial_equation(self):
        # S0 + (z/2) S0' + Dbar S0'' = 0 for any Dbar
        for dbar in (0.7, 1.0, 1.9):
            s0 = GaussianDipole(dbar)
            z = np.linspace(0, 5, 101)
            res = s0(z, 0) + 0.5 * z * s0(z, 1) + dbar * s0(z, 2)
            assert np.max(np.abs(res)) < 1e-12


class TestConstantCoefficientReduction:
    def test_zero_shift(self, const_spectral):
        exp = build_expansion(const_spectral, chi_bar=0.0)
        assert np.max(np.abs(exp.chi0)) < 1e-9
        assert exp.beta1 == pytest.approx(0.0, abs=1e-12)
        assert exp.beta2 == pytest.approx(0.0, abs=1e-12)
        assert exp.d_bar == pytest.approx(1.0, rel=1e-9)
        assert np.max(np.abs(exp.S2_hat)) < 1e-9
        assert np.max(np.abs(exp.phi1)) < 1e-9

    def test_unit_negative_shift(self, const_spectral):
        exp = build_expansion(const_spectral, chi_bar=-1.0)
        assert np.allclose(exp.chi0, -1.0, atol=1e-9)
        assert exp.beta1 == pytest.approx(-0.5, abs=1e-9)
        # beta2 reduces to the weighted average of D chi0 = -d0: the
        # crossed drift-gap terms vanish since c* = 2 lambda* d0
        assert exp.beta2 == pytest.approx(-1.0, abs=1e-8)

    def test_exactness_of_shifted_dipole(self, const_spectral):
        # with no time dilation the assembled ansatz solves the equation
        # exactly for constant coefficients (the residual is pure roundoff)
        exp = build_expansion(const_spectral, chi_bar=-1.0, omega_bar=0.0)
        rep = residual_of_S(exp, [100.0, 200.0])
        assert np.max(rep.sup_residual) < 1e-10

    def test_solvability_invariant(self, const_spectral):
        exp = build_expansion(const_spectral, chi_bar=-1.0)
        assert abs(exp.diagnostics["s2_defect"]) <= 1e-8


class TestBuildExpansion:
    def test_default_shift(self, theta_spectral, theta_expansion):
        chi_max = np.max(np.abs(theta_expansion.chi))
        assert theta_expansion.chi_bar == pytest.approx(-(1 + chi_max))

    def test_phi1_initial_conditions(self, theta_expansion):
        assert theta_expansion.phi1[0] == 0.0
        assert theta_expansion.phi1_z[0] == 0.0

    def test_phi1_quadratic_bound(self, theta_expansion):
        z = theta_expansion.z
        sel = (z > 0) & (z <= theta_expansion.sigma)
        c_phi = np.max(np.abs(theta_expansion.phi1[sel]) / z[sel] ** 2)
        assert np.isfinite(c_phi)
        assert c_phi == pytest.approx(theta_expansion.diagnostics["c_phi"], rel=1e-9)

    def test_s2_solvability_guaranteed(self, theta_expansion):
        assert abs(theta_expansion.diagnostics["s2_defect"]) <= 1e-8

    def test_dbar_sensitivity(self, theta_spectral, theta_expansion):
        # perturbing the effective diffusivity by 1% must break the
        # second-order solvability by a measurable margin
        prof = theta_spectral.profile
        op = TraitOperator(prof.domain,
                           log_gradient_coefficient(prof.domain, theta_spectral.Q_star))
        gap = 2 * theta_spectral.lambda_star * prof.D + prof.A - theta_spectral.c_star
        rhs = 1.01 * theta_expansion.d_bar - prof.D + gap * theta_expansion.chi0
        _, defect = op.solve(rhs)
        assert abs(defect) > 1e-3

    def test_chi_matches_eigen_derivative(self, theta_spectral, theta_expansion):
        from toadfront.dispersion import compute_chi
        chi_fd = compute_chi(theta_spectral.profile, theta_spectral.lambda_star)
        assert np.max(np.abs(chi_fd - theta_expansion.chi)) <= 1e-5

    def test_dbar_matches_quadrature(self, theta_spectral, theta_expansion):
        assert theta_expansion.d_bar == pytest.approx(theta_spectral.D_bar, rel=1e-5)


class TestAssemble:
    def test_leading_order_scaling(self, theta_expansion):
        # the pure dipole/tau term drops by 8 per tau-quadrupling at fixed z
        exp = theta_expansion
        c = exp.spectral.c_star
        z = 1.3
        v1 = exp.S0(z, 0) / 400.0
        v2 = exp.S0(z, 0) / 1600.0
        assert v1 / v2 == pytest.approx(4.0)
        # and the assembled field approaches the dipole term at large tau
        for tau, tol in ((400.0, 0.2), (40000.0, 0.02)):
            S = assemble_S(exp, tau, np.array([c * tau + z * math.sqrt(tau)]))
            assert np.max(np.abs(S * tau - exp.S0(z, 0))) <= tol

    def test_boundary_station_value(self, theta_expansion):
        # at the moving station the dipole vanishes: S = chi0/tau^(3/2) + ...
        exp = theta_expansion
        tau = 400.0
        S = assemble_S(exp, tau, np.array([exp.spectral.c_star * tau]))
        lead = exp.chi0 / tau**1.5
        assert np.max(np.abs(S[0] - lead)) <= 5.0 / tau**2.5

    def test_warns_below_floor(self, theta_expansion):
        with pytest.warns(UserWarning):
            assemble_S(theta_expansion, 10.0,
                       np.array([theta_expansion.spectral.c_star * 10.0]))


class TestResidual:
    def test_full_ratio_family(self, theta_expansion):
        rep = residual_of_S(theta_expansion, [100, 200, 400, 800])
        assert rep.ratios.size == 3
        assert np.all(rep.ratios >= 6.0) and np.all(rep.ratios <= 10.7)

    def test_truncation_is_slower(self, theta_expansion):
        rep = residual_of_S(theta_expansion, [100, 200, 400, 800])
        rep_t = residual_of_S(theta_expansion, [100, 200, 400, 800], truncate=True)
        assert np.all(rep_t.ratios <= 5.5)
        assert np.min(rep.ratios) > np.max(rep_t.ratios)

    def test_gaussian_proximity_bounded(self, theta_expansion):
        rep = residual_of_S(theta_expansion, [100, 200, 400, 800])
        assert np.all(np.isfinite(rep.gaussian_gap))
        assert np.max(rep.gaussian_gap) <= 2.0 * np.min(rep.gaussian_gap)

    def test_zero_function_zero_residual(self, const_spectral):
        # residual operator applied to an exactly-zero ansatz: build with
        # chi_bar = 0 so every term vanishes identically except the dipole,
        # then subtract it by evaluating the truncated residual at the
        # dipole-free level: the reported floor handles exact zeros
        exp = build_expansion(const_spectral, chi_bar=0.0, omega_bar=0.0)
        rep = residual_of_S(exp, [100.0, 200.0], truncate=True)
        assert np.max(rep.sup_residual) < 1e-10


class TestStripComparison:
    def test_deviation_grows_from_zero_and_stays_bounded(self, theta_spectral):
        sd = spectral_data(sample_profile("theta", ThetaDomain(1.0, 2.0, 16)))
        exp = build_expansion(sd, omega_bar=0.0)
        out = compare_xi_S(exp, tau0=50.0, dx=0.1, dt=0.025, sample_every=10.0)
        d = out["weighted_dev"]
        assert d[0] < d[-1]          # grows away from the exact start
        sel = out["taus"] >= 100.0
        assert d[sel].max() / d[sel].min() <= 4.0

    def test_degenerate_strip(self, const_spectral):
        # a strip of vanishing width pins xi to the boundary data
        exp = build_expansion(const_spectral, chi_bar=-1.0, omega_bar=0.0)
        out = compare_xi_S(exp, sigma=0.05, tau0=50.0, dx=0.01, dt=0.01,
                           sample_every=25.0)
        assert np.max(out["weighted_dev"]) <= 1e-3


class TestCriticality:
    def test_verdicts_constant_coefficients(self, const_spectral):
        r_c = 3.0 / (2.0 * const_spectral.lambda_star)
        prof = const_spectral.profile
        verdicts = moving_boundary_criticality(
            prof, [0.0, r_c, 2 * r_c], T_big=10.0, spectral=const_spectral,
            t_end=160.0, dx=0.1, dt=0.025, x_span=160.0)
        assert [v.verdict for v in verdicts] == ["decaying", "bounded", "growing"]

    def test_dipole_oracle_normalization(self):
        # the image solution carries the initial block's mass and dipole
        y = np.linspace(0, 60, 2001)
        tau = 50.0
        vals = halfline_dipole_oracle(y, tau, 1.0)
        m1 = np.trapezoid(y * vals, y)
        assert m1 == pytest.approx(4.0, rel=1e-6)  # (b^2 - a^2)/2 conserved
