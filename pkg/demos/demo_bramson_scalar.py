"""Logarithmic front delay in the scalar Fisher-KPP equation.

Runs the front to t = 120 on a following window, fits the level-set track
against c t - r log t + x0 with the speed pinned to 2, and prints the
fitted log coefficient (the long-horizon acceptance run uses t = 400; this
demo trades a little accuracy for a ~30 s runtime).
"""

import numpy as np

from toadfront.fronts import LevelTraceCollector, fit_bramson, tail_decay_rate
from toadfront.grids import SpaceTimeGrid, ThetaDomain, WindowPolicy, sample_profile
from toadfront.solver import InitSpec, ModelSpec, run

T_END = 120.0
prof = sample_profile("const 1", ThetaDomain(1.0, 2.0, 4))
grid = SpaceTimeGrid(-65.0, 85.0, 0.05, 0.0125, T_END,
                     window=WindowPolicy.follow_front(45.0, 80.0))
model = ModelSpec.local_toads(prof, grid, InitSpec.left_filled(1.0, 0.0))

col = LevelTraceCollector(0.5, "max_theta")
print(f"running the scalar KPP front to t = {T_END:g} ...")
res = run(model, snapshot_times=[T_END],
          observers=[(np.arange(1.0, T_END + 0.5, 1.0), col)])

trace = col.trace()
fit = fit_bramson(trace, mode="fixed_c", c_star=2.0, fit_window=(T_END / 4, T_END))
free = fit_bramson(trace, mode="free_c", fit_window=(T_END / 4, T_END))

print(f"fixed-speed fit:   X(t) = 2 t - {fit.r_hat:.3f} log t + {fit.x_hat:+.3f}"
      f"   (sup residual {fit.residual_sup:.3f})")
print(f"free-speed fit:    c = {free.c_hat:.4f}, r = {free.r_hat:.3f}"
      "   <- nearly collinear regressors degrade r at desk horizons")
print("the fixed-speed log coefficient approaches 3/2 as the horizon grows;")
print("finite-time corrections push it below at this short horizon")

lam = tail_decay_rate(res.snapshots[-1])
print(f"tail decay rate ahead of the front: {lam:.3f} (exponential rate 1)")

delay = trace.positions - 2.0 * trace.times
print("\n    t      X(t) - 2t")
for k in range(9, trace.times.size, max(1, trace.times.size // 8)):
    print(f"  {trace.times[k]:6.1f}   {delay[k]:+.4f}")
