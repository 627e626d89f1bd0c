# What happens when a shrinking surface squeezes the mean out of [-1, 1].
#
# For a singular potential the order parameter must stay in (-1, 1), and the
# conserving model keeps int u fixed.  If the area drops faster than the mass
# allows, the mean m(t) = |int u0| / |Gamma(t)| crosses 1 and no solution can
# exist.  The weighted model conserves int rho c instead and does not suffer.
import numpy as np

from evosurf_ch import (LogPotential, RadialScaling, SchemeConfig, SimulationError, admissibility_profile,
                        make_surface, run_simulation)

# ----------------------------------------------------------------------
# 1. Unit sphere shrinking linearly to radius 1/2 over [0, 1]
# ----------------------------------------------------------------------
surface = make_surface("unit-sphere", 3, RadialScaling.linear(1.0, 0.5, 1.0), t_final=1.0)

# ----------------------------------------------------------------------
# 2. Admissibility profile before any time stepping
# ----------------------------------------------------------------------
report = admissibility_profile(surface, 0.5)
print(report.summary())
print(f"analytic crossing: r(t)^2 = 1/2 at t = {2 - np.sqrt(2):.6f}")

# ----------------------------------------------------------------------
# 3. The conserving model fails shortly after the predicted time
# ----------------------------------------------------------------------
potential = LogPotential(theta=0.5)
try:
    run_simulation(surface, potential, SchemeConfig(1e-2, 1.0), 0.5)
except SimulationError as exc:
    partial = exc.result
    print(f"CH1 stopped: {exc}")
    print(f"last good row: t = {partial.rows[-1]['t']:.2f}, max u = {partial.rows[-1]['max_u']:.6f}")

# ----------------------------------------------------------------------
# 4. The weighted model completes on the same geometry
# ----------------------------------------------------------------------
res = run_simulation(surface, potential, SchemeConfig(1e-2, 1.0, model="CHrho"), 0.5, keep_states=False)
wm = res.column("weighted_mass")
print(f"CHrho completed: max u = {res.column('max_u').max():.6f}, "
      f"weighted mass drift {np.abs(wm - wm[0]).max():.2e}")
