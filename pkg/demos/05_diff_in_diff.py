"""
Difference in differences on category shares
============================================

Two groups observed before and after treatment.  Parallel trends are
assumed for each category's share; standard errors cluster by unit.
"""

import numpy as np

from qualshift import DgpSpec, estimate_pst_did, gen_sample, true_shift

spec = DgpSpec("did", "multinomial", n=2000, seed=7)
sample = gen_sample(spec)

est = estimate_pst_did(sample)
shares = np.array(est.diagnostics["cell_proportions"])
print("treated shares, pre/post:\n", np.round(shares[1], 3))
print("control shares, pre/post:\n", np.round(shares[0], 3))
print("PST:", np.round(est.points, 3), "+/-", np.round(est.ses, 3), f"({est.diagnostics['se_type']})")
print("oracle:", np.round(true_shift(spec).values, 3))
