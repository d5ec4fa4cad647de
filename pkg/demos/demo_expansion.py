"""Multi-scale front-interior ansatz: construction and residual scaling.

Builds the four-term similarity ansatz from spectral data and shows the
dyadic residual ratios approach 8 (the tau^-3 law), while the leading
dipole alone converges strictly slower.
"""

import numpy as np

from toadfront.dispersion import spectral_data
from toadfront.expansion import build_expansion, residual_of_S
from toadfront.grids import ThetaDomain, sample_profile

taus = [100.0, 200.0, 400.0, 800.0]

print("=== trait-linear diffusivity on [1,2] ===")
sd = spectral_data(sample_profile("theta", ThetaDomain(1.0, 2.0, 256)))
exp = build_expansion(sd, omega_bar=0.75)
print(f"c* = {sd.c_star:.6f}, lambda* = {sd.lambda_star:.6f}, "
      f"effective diffusivity = {exp.d_bar:.6f}")
print(f"free shift chi_bar = {exp.chi_bar:.4f}, beta1 = {exp.beta1:.4f}, "
      f"beta2 = {exp.beta2:.4f}")
print(f"second-order solvability defect: {exp.diagnostics['s2_defect']:.2e} "
      "(vanishes by the choice of the effective diffusivity)")
print(f"radial corrector quadratic-growth constant: "
      f"{exp.diagnostics['c_phi']:.3f}")

rep = residual_of_S(exp, taus)
rep_t = residual_of_S(exp, taus, truncate=True)
print("\n   tau    sup residual (full)    (dipole only)")
for tau, s, st_ in zip(rep.taus, rep.sup_residual, rep_t.sup_residual):
    print(f"  {tau:5.0f}     {s:.3e}            {st_:.3e}")
print(f"dyadic ratios, full ansatz:  {np.round(rep.ratios, 3)}  (tau^-3 -> 8)")
print(f"dyadic ratios, dipole only:  {np.round(rep_t.ratios, 3)}  "
      "(slower decay -> smaller ratios)")

print("\n=== constant coefficients: the undilated ansatz is exact ===")
sd1 = spectral_data(sample_profile("const 1", ThetaDomain(1.0, 2.0, 64)))
exp_exact = build_expansion(sd1, chi_bar=-1.0, omega_bar=0.0)
rep_exact = residual_of_S(exp_exact, [100.0, 200.0])
print(f"sup residual without time dilation: {rep_exact.sup_residual} "
      "(pure roundoff: the shifted dipole solves the equation exactly)")
exp_w = build_expansion(sd1, chi_bar=-1.0, omega_bar=0.75)
rep_w = residual_of_S(exp_w, taus)
print(f"with the canonical dilation the tau^-3 law reappears: "
      f"ratios = {np.round(rep_w.ratios, 3)}")
