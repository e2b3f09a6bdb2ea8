"""Causal probability-shift estimators for qualitative outcomes.

Selection-on-observables (doubly robust, cross-fitted), instrumental
variables (2SLS), sharp regression discontinuity (local polynomials) and
two-period difference-in-differences, all applied to the category
indicators ``1{Y = m}``, plus the simulation designs used to check them.
"""

from .core import (
    QualSample,
    ShiftEstimate,
    naive_ate_decomposition,
    read_csv,
    validate_sample,
    write_csv,
)
from .did import estimate_pst_did
from .dgp import DgpSpec, EstimatorConfig, estimate, gen_sample, run_monte_carlo, true_shift
from .iv import estimate_lps
from .rd import estimate_psc
from .soo import conditional_shift, estimate_ps, estimate_pst

__version__ = "0.1.0"

__all__ = [
    "QualSample",
    "ShiftEstimate",
    "naive_ate_decomposition",
    "read_csv",
    "validate_sample",
    "write_csv",
    "estimate_ps",
    "estimate_pst",
    "conditional_shift",
    "estimate_lps",
    "estimate_psc",
    "estimate_pst_did",
    "DgpSpec",
    "EstimatorConfig",
    "estimate",
    "gen_sample",
    "run_monte_carlo",
    "true_shift",
]
