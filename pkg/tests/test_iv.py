from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qualshift.core import QualSample
from qualshift.dgp import DgpSpec, gen_sample
from qualshift.iv import DegenerateInstrument, WeakInstrument, estimate_lps, fit_2sls, wald_ratios


def _from_counts(table):
    """table[(z, d)] = counts per category."""
    y, d, z = [], [], []
    for (zz, dd), counts in table.items():
        for m, c in enumerate(counts, start=1):
            y += [m] * c
            d += [dd] * c
            z += [zz] * c
    return QualSample(y, d, np.zeros((len(y), 0)), instrument=z)


TABLE = {(1, 1): (6, 4, 2), (1, 0): (1, 3, 4), (0, 1): (1, 2, 1), (0, 0): (3, 5, 8)}


def test_contingency_table_wald():
    s = _from_counts(TABLE)
    assert s.n == 40
    n_z = {z: sum(sum(TABLE[(z, d)]) for d in (0, 1)) for z in (0, 1)}
    first = Fraction(sum(TABLE[(1, 1)]), n_z[1]) - Fraction(sum(TABLE[(0, 1)]), n_z[0])
    expected = [
        (Fraction(TABLE[(1, 1)][m] + TABLE[(1, 0)][m], n_z[1]) - Fraction(TABLE[(0, 1)][m] + TABLE[(0, 0)][m], n_z[0])) / first
        for m in range(3)
    ]
    assert expected == [Fraction(3, 8), Fraction(0), Fraction(-3, 8)]
    est = estimate_lps(s)
    np.testing.assert_allclose(est.points, [float(v) for v in expected], atol=1e-10)
    assert est.diagnostics["first_stage_coef"] == pytest.approx(0.4, abs=1e-12)


def test_perfect_compliance_is_difference_in_shares(rng):
    n = 300
    z = rng.integers(0, 2, n)
    y = rng.integers(1, 4, n)
    s = QualSample(y, z, np.zeros((n, 0)), instrument=z)
    Y = s.indicators()
    diff = Y[z == 1].mean(axis=0) - Y[z == 0].mean(axis=0)
    np.testing.assert_allclose(estimate_lps(s).points, diff, atol=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(20, 300), st.integers(2, 5))
def test_wald_equivalence_and_balance(seed, n, M):
    r = np.random.default_rng(seed)
    z = r.integers(0, 2, n)
    z[:2] = [0, 1]
    d = (r.uniform(size=n) < 0.2 + 0.6 * z).astype(int)
    y = r.integers(1, M + 1, n)
    y[:M] = np.arange(1, M + 1)
    s = QualSample(y, d, np.zeros((n, 0)), instrument=z)
    first = d[z == 1].mean() - d[z == 0].mean()
    if abs(first) < 0.05:
        return
    fit = fit_2sls(s)
    assert np.max(np.abs(fit.slopes - wald_ratios(s))) <= 1e-10
    assert abs(fit.slopes.sum()) <= 1e-10
    flipped = QualSample(y, d, np.zeros((n, 0)), instrument=1 - z)
    np.testing.assert_allclose(fit_2sls(flipped).slopes, fit.slopes, atol=1e-10)


def test_first_stage_is_saturated(rng):
    s = gen_sample(DgpSpec("iv", "ordered", 2000, seed=4))
    fit = fit_2sls(s)
    z, d = s.instrument, s.treatment
    assert fit.strength == pytest.approx(d[z == 1].mean() - d[z == 0].mean(), abs=1e-12)


def test_iv_dgp_estimate_reasonable():
    s = gen_sample(DgpSpec("iv", "ordered", 2000, seed=4))
    est = estimate_lps(s)
    assert np.all(np.abs(est.points - np.array([-0.58, 0.0, 0.58])) < 4 * est.ses)
    classical = estimate_lps(s, se_type="classical")
    np.testing.assert_array_equal(classical.points, est.points)
    np.testing.assert_allclose(classical.ses, est.ses, rtol=0.15)


def test_weak_instrument_warns_but_returns():
    n = 4000
    z = np.arange(n) % 2
    d = np.zeros(n, int)
    d[::3] = 1
    d[z == 1][:10] = 1
    d[np.flatnonzero(z == 1)[:20]] = 1 - d[np.flatnonzero(z == 1)[:20]]
    y = 1 + (np.arange(n) % 3)
    s = QualSample(y, d, np.zeros((n, 0)), instrument=z)
    with pytest.warns(WeakInstrument):
        est = estimate_lps(s)
    assert est.diagnostics["weak_instrument"]
    assert est.warnings


def test_degenerate_instrument():
    s = QualSample([1, 2, 1, 2], [0, 1, 0, 1], np.zeros((4, 0)), instrument=[1, 1, 1, 1])
    with pytest.raises(DegenerateInstrument):
        estimate_lps(s)
