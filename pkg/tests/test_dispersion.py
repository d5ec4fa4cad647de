import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from toadfront.dispersion import (
    NoBracket,
    compute_chi,
    dbar_speed_identity_gap,
    dispersion_curve,
    dispersion_report,
    minimize_speed,
    neumann_laplacian_diags,
    principal_eigenpair,
    rel3_residual,
    rel4_residuals,
    spectral_data,
)
from toadfront.grids import ThetaDomain, sample_profile


@pytest.fixture(scope="module")
def theta_profile():
    return sample_profile("theta", ThetaDomain(1.0, 2.0, 256))


@pytest.fixture(scope="module")
def theta_spectral(theta_profile):
    return spectral_data(theta_profile)


class TestPrincipalEigenpair:
    def test_constant_profile(self):
        prof = sample_profile("const 1", ThetaDomain(1.0, 2.0, 64))
        pair = principal_eigenpair(1.0, prof)
        assert pair.mu == pytest.approx(1.0, abs=1e-10)
        assert np.ptp(pair.Q) < 1e-12
        assert prof.domain.integrate(pair.Q) == pytest.approx(1.0, abs=1e-13)

    def test_constant_scaling(self):
        prof = sample_profile("const 4", ThetaDomain(1.0, 2.0, 64))
        assert principal_eigenpair(0.5, prof).mu == pytest.approx(1.0, abs=1e-10)

    def test_grid_refinement_oracle(self):
        mus = {}
        for n in (256, 2048):
            prof = sample_profile("theta", ThetaDomain(1.0, 2.0, n))
            mus[n] = principal_eigenpair(1.0, prof).mu
        assert abs(mus[256] - mus[2048]) <= 1e-8

    def test_positive_eigenfunction(self, theta_profile):
        pair = principal_eigenpair(2.0, theta_profile)
        assert np.min(pair.Q) > 0
        assert pair.residual <= 1e-10


def shooting_mu(lam, theta_min=1.0, theta_max=2.0, mu_guess=None):
    """Independent continuum oracle: RK45 shooting for the Neumann problem."""

    def qprime_at_top(mu):
        def rhs(th, y):
            return [y[1], (mu - lam * lam * th) * y[0]]

        sol = solve_ivp(rhs, (theta_min, theta_max), [1.0, 0.0],
                        rtol=1e-12, atol=1e-12, dense_output=False)
        return sol.y[1, -1]

    lo, hi = mu_guess - 0.3, mu_guess + 0.3
    return brentq(qprime_at_top, lo, hi, xtol=1e-12)


class TestDispersionCurve:
    def test_constant_closed_form(self):
        prof = sample_profile("const 1", ThetaDomain(1.0, 2.0, 32))
        curve = dispersion_curve(prof, (0.2, 5.0), 16)
        assert np.allclose(curve.speeds, curve.lambdas + 1.0 / curve.lambdas, atol=1e-9)

    def test_constant_d0(self):
        prof = sample_profile("const 2.5", ThetaDomain(1.0, 2.0, 32))
        curve = dispersion_curve(prof, (0.2, 5.0), 16)
        assert np.allclose(curve.speeds, 2.5 * curve.lambdas + 1.0 / curve.lambdas,
                           atol=1e-9)

    def test_shooting_oracle(self, theta_profile):
        for lam in (0.4, 0.8, 1.2, 2.0, 4.0):
            mu_grid = principal_eigenpair(lam, theta_profile).mu
            mu_shoot = shooting_mu(lam, mu_guess=mu_grid)
            assert abs(mu_grid - mu_shoot) < 5e-5 * max(1.0, abs(mu_shoot))

    def test_mu_convexity(self, theta_profile):
        curve = dispersion_curve(theta_profile)
        assert curve.convexity_defect() >= -1e-10

    def test_endpoint_blowup(self, theta_profile):
        curve = dispersion_curve(theta_profile)
        assert curve.speeds[0] > np.min(curve.speeds)
        assert curve.speeds[-1] > np.min(curve.speeds)


class TestMinimizeSpeed:
    def test_classical_kpp(self):
        prof = sample_profile("const 1", ThetaDomain(1.0, 2.0, 256))
        sd = minimize_speed(dispersion_curve(prof), prof)
        assert abs(sd.c_star - 2.0) <= 1e-6
        assert abs(sd.lambda_star - 1.0) <= 1e-6

    def test_constant_scaling(self):
        d0 = 2.5
        prof = sample_profile(f"const {d0}", ThetaDomain(1.0, 2.0, 64))
        sd = minimize_speed(dispersion_curve(prof), prof)
        assert sd.c_star == pytest.approx(2 * np.sqrt(d0), abs=1e-8)
        assert sd.lambda_star == pytest.approx(1 / np.sqrt(d0), abs=1e-8)

    def test_no_bracket(self, theta_profile):
        with pytest.raises(NoBracket):
            minimize_speed(dispersion_curve(theta_profile, (5.0, 20.0), 8),
                           theta_profile)

    def test_flat_derivative_at_minimum(self, theta_spectral, theta_profile):
        from toadfront.dispersion import _cprime
        h = 1e-4 * theta_spectral.lambda_star
        assert abs(_cprime(theta_spectral.lambda_star, theta_profile, h)) <= 1e-7

    def test_high_resolution_oracle(self, theta_spectral):
        # independent pass at four times the resolution, bisection included
        prof_hi = sample_profile("theta", ThetaDomain(1.0, 2.0, 1024))
        sd_hi = minimize_speed(dispersion_curve(prof_hi), prof_hi)
        assert abs(theta_spectral.c_star - sd_hi.c_star) < 2e-6
        assert abs(theta_spectral.lambda_star - sd_hi.lambda_star) < 2e-5

    def test_grid_convergence_envelope(self):
        # the ghost-Neumann scheme superconverges for this profile (observed
        # ratios ~12-15, near fourth order, down to the locator noise floor),
        # so successive differences must at least sit under a second-order
        # envelope and shrink under refinement
        cs = {}
        for n in (16, 32, 64, 128):
            prof = sample_profile("theta", ThetaDomain(1.0, 2.0, n))
            cs[n] = minimize_speed(dispersion_curve(prof), prof).c_star
        diffs = [abs(cs[n] - cs[2 * n]) for n in (16, 32, 64)]
        for n, d in zip((16, 32, 64), diffs):
            assert d <= 1.0 * (1.0 / n) ** 2
        assert diffs[0] > diffs[1] > diffs[2]

    def test_c_second_derivative_positive(self, theta_spectral):
        assert theta_spectral.c_second_deriv > 0


class TestChi:
    def test_constant_profile_zero(self):
        prof = sample_profile("const 1", ThetaDomain(1.0, 2.0, 64))
        chi = compute_chi(prof, 1.0)
        assert np.max(np.abs(chi)) < 1e-8

    def test_derivative_normalization(self, theta_profile, theta_spectral):
        # differentiating the unit-integral normalization forces the
        # lambda-derivative of Q to integrate to zero
        lam = theta_spectral.lambda_star
        chi = compute_chi(theta_profile, lam)
        q = theta_spectral.Q_star
        assert abs(theta_profile.domain.integrate(-chi * q)) <= 1e-8

    def test_direct_corrector_oracle(self, theta_profile, theta_spectral):
        # solve the lambda-differentiated eigenproblem directly and compare
        dom = theta_profile.domain
        lam, c_star = theta_spectral.lambda_star, theta_spectral.c_star
        q = theta_spectral.Q_star
        pair = principal_eigenpair(lam, theta_profile)
        main, off = neumann_laplacian_diags(dom)
        n = dom.n_theta
        M = (np.diag(main + lam**2 * theta_profile.D + lam * theta_profile.A - pair.mu)
             + np.diag(off, 1) + np.diag(off, -1))
        rhs = (c_star - 2 * lam * theta_profile.D - theta_profile.A) * q
        # bordered solve with the normalization gauge int(dQ/dlambda) = 0
        B = np.zeros((n + 1, n + 1))
        B[:n, :n] = M
        B[:n, n] = q
        B[n, :n] = dom.dtheta
        sol = np.linalg.solve(B, np.concatenate([rhs, [0.0]]))
        chi_direct = -sol[:n] / q
        chi_fd = compute_chi(theta_profile, lam)
        assert np.max(np.abs(chi_fd - chi_direct)) <= 1e-6


class TestDbarAndBeta:
    def test_constant_dbar(self):
        prof = sample_profile("const 2.5", ThetaDomain(1.0, 2.0, 64))
        sd = spectral_data(prof)
        assert sd.D_bar == pytest.approx(2.5, rel=1e-8)

    def test_unit_identity(self):
        prof = sample_profile("const 1", ThetaDomain(1.0, 2.0, 64))
        sd = spectral_data(prof)
        assert sd.D_bar == pytest.approx(1.0, rel=1e-8)
        assert sd.lambda_star * sd.c_second_deriv / 2 == pytest.approx(1.0, rel=1e-4)

    def test_cross_identity(self, theta_spectral):
        assert dbar_speed_identity_gap(theta_spectral) <= 1e-3

    def test_beta_zero_for_constant(self):
        for d0 in (1.0, 2.5):
            prof = sample_profile(f"const {d0}", ThetaDomain(1.0, 2.0, 64))
            sd = spectral_data(prof)
            assert np.max(np.abs(sd.beta)) < 1e-9

    def test_beta_reproduces_right_side(self, theta_profile, theta_spectral):
        # discrete Laplacian of beta returns the weighted drift gap
        dom = theta_profile.domain
        main, off = neumann_laplacian_diags(dom)
        beta = theta_spectral.beta
        lap = main * beta
        lap[:-1] += off * beta[1:]
        lap[1:] += off * beta[:-1]
        rhs = theta_spectral.weight_mu * (
            2 * theta_spectral.lambda_star * theta_profile.D + theta_profile.A
        ) - theta_spectral.c_star
        assert np.max(np.abs(lap - (rhs - np.mean(rhs)))) <= 1e-6 * np.max(np.abs(rhs))
        assert abs(dom.integrate(beta)) <= 1e-10

    def test_beta_refinement(self):
        # the solved corrector converges under grid refinement
        betas = {}
        for n in (128, 256, 512):
            prof = sample_profile("theta", ThetaDomain(1.0, 2.0, n))
            sd = spectral_data(prof)
            betas[n] = np.interp(np.linspace(1.0, 2.0, 33)[1:-1],
                                 prof.domain.centers, sd.beta)
        e1 = np.max(np.abs(betas[128] - betas[512]))
        e2 = np.max(np.abs(betas[256] - betas[512]))
        assert e2 < e1

    def test_weight_unit_mean(self, theta_spectral):
        dom = theta_spectral.domain
        assert dom.integrate(theta_spectral.weight_mu) / dom.width == pytest.approx(
            1.0, abs=1e-12)


class TestIdentities:
    def test_rel3(self, theta_spectral):
        assert rel3_residual(theta_spectral) <= 1e-6

    def test_rel4(self, theta_profile):
        res = rel4_residuals(theta_profile, [0.4, 0.65, 1.0, 1.6, 2.6])
        assert np.max(res) <= 5e-4

    def test_report_schema(self, theta_profile):
        rep = dispersion_report(theta_profile, n_lambda=24)
        for key in ("lambdas", "mus", "speeds", "c_star", "lambda_star",
                    "Q_star", "chi", "D_bar", "beta", "identities"):
            assert key in rep
        for key in ("rel3_residual", "rel4_residuals", "ddc"):
            assert key in rep["identities"]
