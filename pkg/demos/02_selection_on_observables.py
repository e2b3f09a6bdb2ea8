"""
Probability shifts under selection on observables
=================================================

Cross-fitted doubly robust estimates of the shift in each category's
probability, for the whole population and for the treated.
"""

import numpy as np

from qualshift import DgpSpec, estimate_ps, estimate_pst, gen_sample, true_shift

# treatment depends on two of the three covariates
spec = DgpSpec("soo-obs", "ordered", n=2000, seed=1)
sample = gen_sample(spec)
print(f"{sample.n} units, {sample.treatment.mean():.2f} treated")

# %%
# Shift for the whole population, five folds
ps = estimate_ps(sample, K=5, seed=0)
for c in ps.per_category:
    print(f"category {c.label}: {c.point:+.3f}  [{c.ci_low:+.3f}, {c.ci_high:+.3f}]")
print("sum of shifts:", f"{ps.points.sum():.1e}")
print("oracle value: ", np.round(true_shift(spec).values, 3))

# %%
# Shift on the treated
pst = estimate_pst(sample, K=5, seed=0)
print("PST:", np.round(pst.points, 3), " oracle:", np.round(true_shift(spec, "PST").values, 3))
print("diagnostics:", {k: pst.diagnostics[k] for k in ("K", "attempts_used", "clip_rate")})
