"""Parabolic inequality probes: Harnack, small-time kernel asymptotics,
kernel power bound, and the cylinder Nash inequality."""

import math

import numpy as np

from toadfront.kernels import (
    harnack_constant,
    kernel_power_bound_check,
    nash_check,
    riemannian_distance,
    varadhan_check,
    window_growth_factor,
)


def a_var(x):
    return 2.0 + np.sin(x)


print("=== same-time Harnack constants ===")
w = 0.25
u0 = lambda x: np.exp(-x * x / (2 * w * w))  # noqa: E731
C, wit = harnack_constant(u0, 1.0, 0.5, R=1.0, p=1.5)
sig2 = w * w + 1.0
C_exact = (w / math.sqrt(sig2)) ** (1 / 3) * math.exp(1.0 / sig2)
print(f"Gaussian data, p=1.5:   C_emp = {C:.6f}   closed form = {C_exact:.6f}")
g1 = window_growth_factor(u0, 1.0, 0.5, 1.0, p=1.0, window=4.0)
g15 = window_growth_factor(u0, 1.0, 0.5, 1.0, p=1.5, window=4.0)
print(f"window doubling growth: p=1.0 -> x{g1:.1f} (unbounded),"
      f"  p=1.5 -> x{g15:.4f} (stable)")

print("\n=== small-time kernel asymptotics, a(x) = 2 + sin x ===")
print(f"induced distance d(0,3) = {riemannian_distance(a_var, 0.0, 3.0):.6f}"
      f"  (straight-line 3/sqrt(a) bounds: {3/math.sqrt(3):.3f} .. 3.000)")
tab = varadhan_check(a_var, [0.1, 0.05, 0.025],
                     kernel_kwargs=dict(x_min=-9, x_max=9,
                                        sources=np.arange(-3.5, 3.6, 0.5)))
for t, err in zip(tab.t_list, tab.max_rel_err):
    print(f"  t = {t:5.3f}:  max |(-4t log G) - d^2| / d^2 = {err:.4f}")
print(f"  table decreasing: {tab.decreasing}")

print("\n=== kernel power bound, (s, p) = (0.8, 1.5) ===")
C, drift = kernel_power_bound_check(1.0, 0.5, R=1.0, s=0.8, p=1.5)
sp = 1.2
C_exact = (4 * math.pi * 0.5) ** (-(sp - 1) / 2) * math.exp(sp / (2 * (sp - 1)))
print(f"C_emp = {C:.4f}   Gaussian closed form = {C_exact:.4f}"
      f"   domain-doubling drift = {drift:.4f}")

print("\n=== cylinder Nash inequality, randomized trials ===")
for k, d in ((1, 1), (3, 1), (2, 2)):
    rep = nash_check(k, d, trial_count=4000, rng_seed=20240501 + 7 * k + d)
    print(f"  k={k}, d={d}: empirical constant {rep.c_emp:8.4f}"
          f"   half-vs-full drift {rep.drift:.2%}")
print("the constants stay positive and the minimum stabilizes under doubling,")
print("which is the numerically checkable face of the inequality")
