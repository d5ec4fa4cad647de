import numpy as np
import pytest

from toadfront.fronts import (
    FrontTrace,
    IllConditioned,
    LevelNotAttained,
    WindowOutsideGrid,
    extract_level_set,
    fit_bramson,
    harnack_ratio_field,
    level_position,
    tail_decay_rate,
)
from toadfront.grids import Field, ThetaDomain


DOM = ThetaDomain(1.0, 2.0, 8)


def field_from_profile(q, dx=0.05, t=0.0, x_offset=0.0):
    vals = np.repeat(np.asarray(q, dtype=float)[:, None], DOM.n_theta, axis=1)
    return Field(t, x_offset, dx, DOM, vals)


class TestLevelSet:
    def test_synthetic_front_position(self):
        x = np.arange(0.0, 40.0, 0.05)
        x0 = 17.3137
        q = 0.5 * (1 - np.tanh(2 * (x - x0)))
        fld = field_from_profile(q)
        assert level_position(fld, 0.5) == pytest.approx(x0, abs=0.05**2)

    def test_level_above_max(self):
        fld = field_from_profile(np.exp(-np.arange(0.0, 10.0, 0.1)))
        with pytest.raises(LevelNotAttained):
            level_position(fld, 2.0)

    def test_offset_invariance(self):
        x = np.arange(0.0, 40.0, 0.05)
        q = 0.5 * (1 - np.tanh(2 * (x - 20.0)))
        a = field_from_profile(q, x_offset=0.0)
        b = field_from_profile(q, x_offset=123.25)
        assert level_position(b, 0.5) == pytest.approx(
            level_position(a, 0.5) + 123.25, abs=1e-12)

    def test_ordering_in_level(self):
        x = np.arange(0.0, 40.0, 0.05)
        q = 0.5 * (1 - np.tanh(0.7 * (x - 20.0)))
        fld = field_from_profile(q)
        xs = [level_position(fld, m) for m in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(a > b for a, b in zip(xs, xs[1:]))

    def test_extract_skips_pre_onset(self):
        snaps = []
        for t, amp in ((0.5, 0.2), (1.0, 0.8), (2.0, 0.9)):
            x = np.arange(0.0, 20.0, 0.1)
            snaps.append(field_from_profile(amp * np.exp(-(x - 3 * t) ** 2), t=t))
        tr = extract_level_set(snaps, 0.5)
        assert tr.skipped_times == [0.5]
        assert tr.times.tolist() == [1.0, 2.0]


class TestBramsonFit:
    def test_exact_recovery(self):
        t = np.linspace(30.0, 400.0, 200)
        tr = FrontTrace(0.5, "synthetic", t, 2 * t - 1.5 * np.log(t) + 3.0)
        fit = fit_bramson(tr, mode="free_c", fit_window=(40.0, 400.0))
        assert fit.c_hat == pytest.approx(2.0, abs=1e-9)
        assert fit.r_hat == pytest.approx(1.5, abs=1e-9)
        assert fit.x_hat == pytest.approx(3.0, abs=1e-8)
        assert fit.orthogonality < 1e-10

    def test_pure_linear_gives_zero_r(self):
        t = np.linspace(30.0, 400.0, 150)
        tr = FrontTrace(0.5, "synthetic", t, 1.7 * t)
        fit = fit_bramson(tr, mode="fixed_c", c_star=1.7, fit_window=(40.0, 400.0))
        assert abs(fit.r_hat) <= 1e-9

    def test_fixed_c_recovery(self):
        t = np.linspace(30.0, 400.0, 200)
        tr = FrontTrace(0.5, "synthetic", t, 2 * t - 1.5 * np.log(t) + 3.0)
        fit = fit_bramson(tr, mode="fixed_c", c_star=2.0, fit_window=(40.0, 400.0))
        assert fit.r_hat == pytest.approx(1.5, abs=1e-10)

    def test_round_trip_property(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            c, r, x0 = rng.uniform(0.5, 3), rng.uniform(0, 3), rng.uniform(-5, 5)
            t = np.linspace(25.0, 300.0, 120)
            tr = FrontTrace(0.5, "synthetic", t, c * t - r * np.log(t) + x0)
            fit = fit_bramson(tr, mode="free_c")
            assert fit.c_hat == pytest.approx(c, abs=1e-7)
            assert fit.r_hat == pytest.approx(r, abs=1e-6)

    def test_short_window_ill_conditioned(self):
        t = np.linspace(100.0, 100.5, 40)
        tr = FrontTrace(0.5, "synthetic", t, 2 * t - 1.5 * np.log(t))
        with pytest.raises(IllConditioned):
            fit_bramson(tr, mode="free_c", fit_window=(100.0, 100.5))

    def test_needs_enough_samples(self):
        t = np.linspace(50.0, 400.0, 10)
        tr = FrontTrace(0.5, "synthetic", t, 2 * t)
        with pytest.raises(ValueError):
            fit_bramson(tr, mode="fixed_c", c_star=2.0, fit_window=(50.0, 400.0))


class TestTailRate:
    def test_pure_exponential(self):
        x = np.arange(0.0, 60.0, 0.02)
        fld = field_from_profile(np.exp(-x), dx=0.02)
        assert tail_decay_rate(fld) == pytest.approx(1.0, abs=1e-10)

    def test_linear_prefactor_bias(self):
        x = np.arange(0.1, 80.0, 0.02)
        fld = field_from_profile(x * np.exp(-x), dx=0.02)
        lam = tail_decay_rate(fld)
        bias_bound = np.log(26.0 / 16.0) / 10.0
        assert 1.0 - bias_bound - 0.01 <= lam <= 1.0

    def test_window_outside_grid(self):
        x = np.arange(0.0, 10.0, 0.1)
        fld = field_from_profile(np.exp(-x), dx=0.1)
        with pytest.raises(WindowOutsideGrid):
            tail_decay_rate(fld)


class TestHarnackRatio:
    def test_constant_field(self):
        a = 0.7
        p = 1.25
        fld = field_from_profile(np.full(400, a), t=2.0)
        C, _ = harnack_ratio_field([fld], p, 1.0, min_pairs=100)
        assert C == pytest.approx(a ** (1 - 1 / p), rel=1e-12)

    def test_exponential_closed_form(self):
        lam, p, R = 0.8, 1.25, 1.0
        x = np.arange(0.0, 30.0, 0.05)
        n = np.exp(-lam * x)
        fld = field_from_profile(n, t=2.0)
        # the level restriction keeps x <= x_cut; the sup over pairs is
        # n_max^(1-1/p) e^(lam R / p) attained at the left edge
        C, _ = harnack_ratio_field([fld], p, R, level_frac=1e-3, min_pairs=1000)
        C_exact = np.exp(lam * R / p)
        assert C == pytest.approx(C_exact, rel=1e-6)

    def test_requires_t_at_least_one(self):
        fld = field_from_profile(np.full(300, 1.0), t=0.2)
        with pytest.raises(ValueError):
            harnack_ratio_field([fld], 1.25, 1.0)
