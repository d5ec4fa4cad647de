import math

import numpy as np
import pytest

from toadfront.dispersion import spectral_data
from toadfront.expansion import halfline_dipole_oracle
from toadfront.fronts import tail_decay_rate
from toadfront.grids import (
    ReactionLaw,
    SpaceTimeGrid,
    ThetaDomain,
    WindowPolicy,
    sample_profile,
)
from toadfront.solver import (
    InitSpec,
    ModelSpec,
    OmegaSpec,
    Stepper,
    build_sandwich,
    run,
    solve_travelling_wave,
)


@pytest.fixture(scope="module")
def dom4():
    return ThetaDomain(1.0, 2.0, 4)


@pytest.fixture(scope="module")
def const_profile(dom4):
    return sample_profile("const 1", dom4)


class TestHeatLimit:
    def test_gaussian_solution(self, const_profile, dom4):
        grid = SpaceTimeGrid(-8.0, 8.0, 0.02, 0.005, 1.0)
        model = ModelSpec.local_general(const_profile, grid,
                                        InitSpec.delta_approx(0.0, 0.1),
                                        reaction=None)
        f = run(model, snapshot_times=[1.0]).snapshots[-1]
        var = 0.1**2 + 2.0
        exact = np.exp(-f.x**2 / (2 * var)) / np.sqrt(2 * np.pi * var) / dom4.width
        assert np.max(np.abs(f.values[:, 0] - exact)) <= 1e-3
        assert np.ptp(f.values, axis=1).max() < 1e-12  # stays theta-uniform

    def test_refinement_order(self, const_profile, dom4):
        # observed order of the reaction-free scheme is at least 1.8
        errs = []
        for k in (1, 2, 4):
            grid = SpaceTimeGrid(-8.0, 8.0, 0.08 / k, 0.02 / k, 0.5)
            model = ModelSpec.local_general(const_profile, grid,
                                            InitSpec.delta_approx(0.0, 0.2),
                                            reaction=None)
            f = run(model, snapshot_times=[0.5]).snapshots[-1]
            var = 0.2**2 + 1.0
            exact = np.exp(-f.x**2 / (2 * var)) / np.sqrt(2 * np.pi * var) / dom4.width
            errs.append(np.max(np.abs(f.values[:, 0] - exact)))
        order = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
        assert min(order) >= 1.8

    def test_theta_flux_conservation(self, dom4):
        # ghost-point Neumann keeps the theta mass of every x-row exact
        prof = sample_profile("const 1", dom4)
        grid = SpaceTimeGrid(0.0, 2.0, 0.1, 0.02, 0.2)
        model = ModelSpec.local_general(prof, grid, InitSpec.block(0.5, 1.5),
                                        reaction=None)
        st = Stepper(model)
        rng = np.random.default_rng(0)
        st.field.values[:] = rng.uniform(0.5, 1.5, st.field.values.shape)
        row_mass = st.field.values.sum(axis=1).copy()
        # pure theta half-sweep: x-diffusion off via D -> 0
        st.D = np.zeros_like(st.D)
        st.step()
        assert np.max(np.abs(st.field.values.sum(axis=1) - row_mass)) < 1e-12


class TestSteadyStates:
    def test_nonlocal_homogeneous_fixed_point(self, dom4):
        prof = sample_profile("const 1", dom4)
        grid = SpaceTimeGrid(0.0, 10.0, 0.05, 0.0125, 12.5)
        model = ModelSpec.nonlocal_toads(prof, grid,
                                         InitSpec.left_filled(1.0, 20.0), 1.0)
        res = run(model, snapshot_times=[12.5])
        rho = res.snapshots[-1].values.sum(axis=1) * dom4.dtheta
        assert np.max(np.abs(rho - 1.0)) <= 1e-10

    def test_zero_initial_data(self, const_profile):
        grid = SpaceTimeGrid(0.0, 5.0, 0.1, 0.025, 1.0)
        model = ModelSpec.local_toads(const_profile, grid, InitSpec.block(1, 2, 0.0))
        res = run(model, snapshot_times=[1.0])
        assert np.max(np.abs(res.snapshots[-1].values)) == 0.0


class TestFrontRuns:
    @pytest.fixture(scope="class")
    def kpp_run(self, const_profile):
        grid = SpaceTimeGrid(-50.0, 60.0, 0.05, 0.0125, 50.0,
                             window=WindowPolicy.follow_front(45.0, 50.0))
        model = ModelSpec.local_toads(const_profile, grid,
                                      InitSpec.left_filled(1.0, 0.0))
        return run(model, snapshot_times=[25.0, 50.0])

    def test_speed_and_bound(self, kpp_run):
        f25, f50 = kpp_run.snapshots
        from toadfront.fronts import level_position
        x25 = level_position(f25, 0.5)
        x50 = level_position(f50, 0.5)
        assert 1.85 <= (x50 - x25) / 25.0 <= 2.0
        assert kpp_run.log.running_max <= 1.0 + 1e-9

    def test_positivity(self, kpp_run):
        assert kpp_run.log.clamped_mass == 0.0
        assert np.min(kpp_run.snapshots[-1].values) >= 0.0

    def test_saturation_behind_front(self, kpp_run):
        # truncated-window Neumann left wall: u relaxes to the carrying
        # capacity behind the front
        f = kpp_run.snapshots[-1]
        assert np.min(f.values[:40]) >= 1.0 - 1e-6

    def test_window_shift_invariance(self, const_profile):
        # the window policy must not move reported absolute positions
        from toadfront.fronts import level_position
        out = {}
        for margin in (50.0, 70.0):
            grid = SpaceTimeGrid(-50.0, 60.0, 0.05, 0.0125, 20.0,
                                 window=WindowPolicy.follow_front(45.0, margin))
            model = ModelSpec.local_toads(const_profile, grid,
                                          InitSpec.left_filled(1.0, 0.0))
            out[margin] = level_position(run(model, snapshot_times=[20.0]).snapshots[-1], 0.5)
        assert abs(out[50.0] - out[70.0]) < 1e-6


class TestPEquation:
    def test_image_kernel_oracle(self, const_profile, dom4):
        sd = spectral_data(const_profile)
        grid = SpaceTimeGrid(-2.0, 118.0, 0.05, 0.0125, 50.0)
        model = ModelSpec.p_equation(const_profile, grid,
                                     InitSpec.block(1.0, 3.0, 1.0), spectral=sd)
        res = run(model, snapshot_times=[25.0, 50.0])
        for f in res.snapshots:
            y = f.x - sd.c_star * f.t
            sel = (y >= 1.0) & (y <= 3.0 * math.sqrt(f.t))
            oracle = halfline_dipole_oracle(y[sel], f.t, 1.0)
            err = np.max(np.abs(f.values[sel, 0] - oracle)) / np.max(oracle)
            assert err <= 0.01

    def test_sup_norm_decay_rate(self, const_profile):
        # tau^(3/2) sup of the un-weighted variable e^(-lam y) p stabilizes
        sd = spectral_data(const_profile)
        grid = SpaceTimeGrid(-2.0, 118.0, 0.05, 0.0125, 80.0)
        model = ModelSpec.p_equation(const_profile, grid,
                                     InitSpec.block(1.0, 3.0, 1.0), spectral=sd)
        res = run(model, snapshot_times=[20.0, 40.0, 80.0])
        w = []
        for f in res.snapshots:
            y = np.maximum(f.x - sd.c_star * f.t, 0.0)
            w.append(f.t**1.5 * np.max(np.exp(-sd.lambda_star * y)[:, None] * f.values))
        assert max(w) / min(w) <= 1.25

    def test_weighted_mass_monotone(self):
        # trait-weighted mass is non-increasing for the drift-corrected flow
        dom = ThetaDomain(1.0, 2.0, 16)
        prof = sample_profile("theta", dom)
        sd = spectral_data(prof)
        grid = SpaceTimeGrid(-2.0, 138.0, 0.1, 0.025, 40.0)
        model = ModelSpec.p_equation(prof, grid, InitSpec.block(1.0, 3.0, 1.0),
                                     spectral=sd)
        masses = []

        def watch(f):
            masses.append(float(np.sum(f.values * sd.weight_mu[None, :]))
                          * f.dx * dom.dtheta)

        run(model, observers=[(np.arange(1.0, 40.1, 1.0), watch)])
        d = np.diff(masses)
        assert np.all(d <= 1e-10 * masses[0])

    def test_sign_preserved(self, const_profile):
        sd = spectral_data(const_profile)
        grid = SpaceTimeGrid(-2.0, 78.0, 0.05, 0.0125, 20.0)
        model = ModelSpec.p_equation(const_profile, grid,
                                     InitSpec.block(1.0, 3.0, 1.0), spectral=sd)
        res = run(model, snapshot_times=[20.0])
        assert res.log.clamped_mass <= 1e-12
        assert np.min(res.snapshots[-1].values) >= 0.0


class TestOmegaSpec:
    def test_rational_bounds(self):
        om = OmegaSpec.rational(1.5, 2.0, 10.0)
        taus = np.linspace(1.0, 500.0, 200)
        rep = om.bounds_report(taus)
        assert rep["max_tau_omega"] <= 1.5 / 2.0 + 0.05
        assert rep["max_omega_prime_tau2"] <= 2.0
        assert om.omega_bar == pytest.approx(0.75)

    def test_time_change_inverse(self):
        om = OmegaSpec.rational(1.5, 2.0, 10.0)
        for tau in (1.0, 10.0, 300.0):
            t = om.lab_time(tau)
            assert t - (1.5 / 2.0) * math.log1p(t / 10.0) == pytest.approx(tau, abs=1e-9)


class TestTravellingWave:
    def test_scalar_kpp_tail(self, const_profile):
        w = solve_travelling_wave(const_profile, ReactionLaw(), 2.0)
        assert w.converged
        assert w.monotonicity_defect <= 1e-10
        lam_hat = tail_decay_rate(w.field)
        # the linear-prefactor bias over the window is bounded by log(26/16)/10
        assert abs(lam_hat - 1.0) <= np.log(26.0 / 16.0) / 10.0 + 0.02

    def test_constant_scaling(self, dom4):
        prof = sample_profile("const 4", dom4)
        w = solve_travelling_wave(prof, ReactionLaw(), 4.0,
                                  xi_min=-60, xi_max=60, dx=0.1)
        lam_hat = tail_decay_rate(w.field)
        assert abs(lam_hat - 0.5) <= 0.05

    def test_trait_structured_minimal_wave(self):
        dom = ThetaDomain(1.0, 2.0, 16)
        prof = sample_profile("theta", dom)
        sd = spectral_data(prof)
        w = solve_travelling_wave(prof, ReactionLaw(), sd.c_star, dx=0.1)
        lam_hat = tail_decay_rate(w.field)
        assert abs(lam_hat - sd.lambda_star) / sd.lambda_star <= 0.10


class TestSandwich:
    @pytest.fixture(scope="class")
    def nonlocal_run(self):
        dom = ThetaDomain(1.0, 2.0, 8)
        prof = sample_profile("theta", dom)
        grid = SpaceTimeGrid(-20.0, 80.0, 0.1, 0.025, 10.0)
        model = ModelSpec.nonlocal_toads(prof, grid,
                                         InitSpec.left_filled(1.0, 0.0), 1.0)
        return run(model, snapshot_times=[1.0, 5.0, 10.0])

    def test_huge_constant_orders_trivially(self, nonlocal_run):
        rep = build_sandwich(nonlocal_run, C_harnack=50.0, p_exponent=1.25)
        assert rep.t1_lower_margin >= -1e-8
        assert rep.t1_upper_margin >= -1e-8

    def test_ordering_short_horizon(self, nonlocal_run):
        rep = build_sandwich(nonlocal_run, C_harnack=2.0, p_exponent=1.25)
        st_n = Stepper(nonlocal_run.model)
        st_lo = Stepper(rep.lower_model)
        st_up = Stepper(rep.upper_model)
        for tt in np.arange(1.0, 10.1, 1.0):
            for st in (st_n, st_lo, st_up):
                st.advance_to(tt)
            assert np.min(st_n.field.values - st_lo.field.values) >= -1e-8
            assert np.min(st_up.field.values - st_n.field.values) >= -1e-8

    def test_upper_linear_growth_limit(self):
        # with an enormous constant the upper reaction degenerates to pure
        # exponential growth: mass multiplies by e over one unit of time
        dom = ThetaDomain(1.0, 2.0, 8)
        prof = sample_profile("const 1", dom)
        grid = SpaceTimeGrid(-30.0, 30.0, 0.1, 0.025, 1.0)
        up = ReactionLaw("upper_sandwich", C=1e6, p=1.25)
        model = ModelSpec.local_toads(prof, grid, InitSpec.block(-5, 5, 1e-3), up)
        res = run(model, snapshot_times=[0.0, 1.0])
        m0 = np.sum(res.snapshots[0].values)
        m1 = np.sum(res.snapshots[1].values)
        assert m1 / m0 == pytest.approx(math.e, rel=0.02)


class TestGuards:
    def test_blowup_detected(self, const_profile):
        # a degenerate upper-sandwich reaction is pure exponential growth;
        # from unit data it must trip the 1e6 guard near t = log(1e6)
        from toadfront.solver import StabilityBlowup
        grid = SpaceTimeGrid(-30.0, 30.0, 0.1, 0.025, 40.0)
        up = ReactionLaw("upper_sandwich", C=1e12, p=1.25)
        model = ModelSpec.local_toads(const_profile, grid,
                                      InitSpec.block(-5, 5, 1.0), up)
        st = Stepper(model)
        with pytest.raises(StabilityBlowup):
            st.advance_to(40.0)
        assert 12.0 <= st.field.t <= 16.0
