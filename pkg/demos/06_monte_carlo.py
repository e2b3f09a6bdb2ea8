"""
A small Monte Carlo study
=========================

Bias, spread and coverage of an estimator over repeated samples.  Each
replication draws from its own seeded stream, so results do not depend
on the number of worker processes.
"""

from qualshift import DgpSpec, run_monte_carlo

report = run_monte_carlo(DgpSpec("iv", "ordered", n=1000, seed=2024), R=40)
print(report.table())
print(f"{report.runtime:.1f}s")

# %%
# the same report as CSV, as written by ``qualshift simulate``
print(report.to_csv())
