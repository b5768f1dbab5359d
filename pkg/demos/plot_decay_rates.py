"""
Decay rates away from the horizon
=================================

Away from the horizon the solution decays. This demo fits power laws in
``1 + tau`` to the slice sup norms and compares them with the upper bounds
``-1/2`` (for ``psi``, ``T psi`` and the angular gradient) and ``-1/4`` (for
``sqrt(D) Y psi``). It also checks the energy hierarchy
``E_T <= E_P <= E_N`` and the Hardy ratio against its constant.

Runs in under a minute on one core.
"""

import numpy as np

from ernwave import Bump, Coupling, InitialData, decay_fit
from ernwave.config import RunConfig
from ernwave.diagnostics import hardy_constant
from ernwave.fields import GridSpec
from ernwave.geometry import FoliationSpec
from ernwave.runner import run

T_END = 300.0
grid = GridSpec(1600, 620.0, n_theta=8, stretching="horizon_refined", slicing="horizon_adapted")
cfg = RunConfig(foliation=FoliationSpec(6.0, 620.0), grid=grid,
                data=InitialData(Bump(2.0, 1.5, modes=((0, 1.0), (2, 0.5)))))
cfg = cfg.with_evolution(t_star_end=T_END, amplitude=1e-2, coupling=Coupling("constant", 1.0))
outcome = run(cfg)
rec = outcome.recorder

# %%
# Fits over the final decade of ``1 + tau``.

t = rec.column("t_star")
window = ((1 + T_END) / 10 - 1, T_END)
for name, bound in (("psi", -0.5), ("T_psi", -0.5), ("grad_psi", -0.5), ("sqrtD_Y_psi", -0.25)):
    fit = decay_fit(t, rec.column(name), window)
    lo, hi = fit.confidence_interval
    print(f"{name:12s} exponent {fit.exponent:+.2f} [{lo:+.2f}, {hi:+.2f}]  bound {bound:+.2f}")

# %%
# Energies on every slice.

ET, EP, EN = (rec.column(k, "energy") for k in ("E_T", "E_P", "E_N"))
print("ordering holds:", bool(np.all((ET <= EP) & (EP <= EN))))
print(f"max E_T (1 + tau)^2 = {np.max(ET * (1 + t) ** 2):.3e}")
print(f"max Hardy ratio {rec.column('hardy_ratio', 'energy').max():.3f} "
      f"<= constant {hardy_constant(outcome.result.grid):.1f}")
