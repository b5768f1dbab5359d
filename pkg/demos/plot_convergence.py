"""
Convergence of the evolution scheme
===================================

Three nested resolutions of the same configuration give observed orders for
a manufactured solution, for the drift of the horizon charge and for the
final-slice self-difference of ``psi``.
"""

from ernwave.config import parse_config_text
from ernwave.runner import convergence_suite

cfg = parse_config_text("""
[foliation]
r_max = 410
[grid]
n_r = 201
horizon_spacing = 0.0008
growth = 0.2
slice_offset = 0.004
[evolution]
t_star_end = 20
""")

rep = convergence_suite(cfg, levels=3)
print("n_r                ", rep.n_r)
print("manufactured error ", ["%.2e" % e for e in rep.mms_errors], "orders", [round(o, 2) for o in rep.mms_orders])
print("H0 drift           ", ["%.2e" % e for e in rep.h0_drift], "orders", [round(o, 2) for o in rep.h0_orders])
print("self differences   ", ["%.2e" % e for e in rep.self_differences],
      "order", round(rep.self_difference_order, 2))
for line in rep.flags + rep.notes:
    print(line)
