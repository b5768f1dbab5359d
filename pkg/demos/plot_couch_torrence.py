"""
The Couch-Torrence involution
=============================

The map ``r -> M + M^2/(r - M)`` swaps the horizon and null infinity. This
demo applies the induced field transformation twice, then runs the
finite-difference audit of the conformal identities and reports the
observed orders of convergence.
"""

import numpy as np

from ernwave import ChartTag, RadialField, ct_audit, ct_pullback
from ernwave.couch_torrence import CTTestField, ct_conformal_residual, ct_nullform_transform_residual

# %%
# A profile near the horizon becomes one near infinity and back again.

r = np.linspace(1.05, 4.0, 200)
field = RadialField(r, np.exp(-((r - 2.0) ** 2)), ChartTag.NEAR_HORIZON)
image = ct_pullback(field)
back = ct_pullback(image)
print(f"image spans r in [{image.r[0]:.2f}, {image.r[-1]:.2f}], tag {image.tag.value}")
print(f"round trip error {np.max(np.abs(back.values - field.values)):.1e}")

# %%
# Residuals of the two identities under grid doubling.

for check in (ct_conformal_residual, ct_nullform_transform_residual):
    res = [check(CTTestField(), n=n) for n in (100, 200, 400)]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    print(f"{check.__name__:32s} residuals {np.array(res)}  orders {orders.round(2)}")

# %%
# The full audit as written by ``ernwave ct-audit``.

report = ct_audit()
print("audit passed:", report["passed"])
for note in report["notes"]:
    print("-", note)
