"""
Shifts for compliers with a binary instrument
=============================================

Regressing each category indicator on treatment, instrumented by a
randomized encouragement, gives the shift among compliers.  With one
binary instrument and no covariates 2SLS is the Wald ratio.
"""

import numpy as np

from qualshift import DgpSpec, estimate_lps, gen_sample, true_shift
from qualshift.iv import wald_ratios

spec = DgpSpec("iv", "ordered", n=2000, seed=3)
sample = gen_sample(spec)

est = estimate_lps(sample)
print("first stage:", round(est.diagnostics["first_stage_coef"], 3))
print("LPS:        ", np.round(est.points, 3), "+/-", np.round(est.ses, 3))
print("Wald ratios:", np.round(wald_ratios(sample), 3))
print("oracle:     ", np.round(true_shift(spec).values, 3))
