"""
Why an average effect on category codes misleads
================================================

A categorical outcome coded 1, 2, 3 can be relabelled at will.  The mean
difference of the codes changes sign under relabelling; the per-category
probability shifts are simply permuted.
"""

import numpy as np

from qualshift import naive_ate_decomposition

# treatment moves 5 points of mass from category 1 to category 3
shifts = np.array([-0.05, 0.0, 0.05])
print("shifts          ", shifts)
print("ATE, codes 1,2,3", round(naive_ate_decomposition(shifts), 6))

# reverse the coding: the "effect" changes sign
print("ATE, codes 3,2,1", round(naive_ate_decomposition(shifts, labels=[3, 2, 1]), 6))

# a zero "average effect" can hide a large redistribution
spread = np.array([0.2, -0.4, 0.2])
print("ATE of a spread ", round(naive_ate_decomposition(spread), 6))
