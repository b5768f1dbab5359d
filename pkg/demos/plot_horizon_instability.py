"""
Horizon instability on extremal Reissner-Nordstrom
==================================================

Evolve small generic data with the null-form nonlinearity and follow three
quantities along the event horizon: the conserved charge ``H0``, the
transversal derivative ``Y psi`` (which stops decaying and tends to ``H0``)
and ``Y^2 psi`` (which grows linearly in advanced time).

The horizon spacing and the growth rate of the grid must shrink together:
a large growth rate next to a sharply bent slice leaves ``Y^2 psi`` at the
horizon unresolved, even though ``H0`` is still conserved.

Runs in about half a minute on one core.
"""

import numpy as np

from ernwave import Bump, Coupling, InitialData, Recorder, instability_report
from ernwave.config import RunConfig
from ernwave.fields import GridSpec
from ernwave.geometry import FoliationSpec
from ernwave.runner import run

# %%
# Set up a horizon-refined grid on horizon-adapted slices. The data is a
# smooth bump straddling the horizon with a monopole and a quadrupole.

grid = GridSpec(801, 410.0, n_theta=8, stretching="horizon_refined", slicing="horizon_adapted",
                horizon_spacing=2e-4, growth=0.05, slice_offset=4e-3)
data = InitialData(Bump(2.0, 1.5, modes=((0, 1.0), (2, 0.5))))
cfg = RunConfig(foliation=FoliationSpec(6.0, 410.0), grid=grid, data=data)
cfg = cfg.with_evolution(t_star_end=200.0, amplitude=1e-2, coupling=Coupling("constant", 1.0))

outcome = run(cfg)
print(f"status {outcome.manifest.status}, {outcome.manifest.summary['steps']} steps, "
      f"{outcome.manifest.wall_time_s:.1f} s")

# %%
# The horizon record. ``H0`` stays fixed while ``psi0`` decays, so ``Y psi0``
# has to approach ``H0``.

rec: Recorder = outcome.recorder
v = np.array([h.v for h in rec.horizon])
for target in (0, 10, 50, 100, 150, 200):
    h = rec.horizon[int(np.argmin(np.abs(v - target)))]
    print(f"v = {h.v:5.0f}  psi0 = {h.psi0:+.3e}  Ypsi0 = {h.Ypsi0:+.5e}  "
          f"Y2psi0 = {h.Y2psi0:+.4e}  H0 = {h.H0:+.6e}")

# %%
# Fit ``Y^2 psi0`` against ``v`` over the second half of the run. The slope
# has the sign of ``-H0``.

rep = instability_report(rec.horizon)
print(f"Y psi0 - H0 at v = {rep.final_v:g}: {rep.Ypsi0_minus_H0:.2e}")
print(f"slope {rep.Y2_slope:.4e}, R^2 {rep.Y2_r_squared:.6f}, sign ok: {rep.slope_sign_ok}")
