import numpy as np
import pytest

from qualshift.dgp import (
    DgpSpec,
    EstimatorConfig,
    _discretise,
    class_probabilities,
    gen_potential_outcomes,
    gen_sample,
    propensity,
    run_monte_carlo,
    true_shift,
)


def test_ordered_thresholds_are_right_closed():
    np.testing.assert_array_equal(_discretise(np.array([1.9, 2.0, 2.5, 3.0, 3.1])), [1, 1, 2, 2, 3])


def test_ordered_potential_outcomes_share_noise(rng):
    spec = DgpSpec("soo-random", "ordered")
    # x sums to 0.5; with eps = 1.5 the latent value is 2.0 (class 1) and 4.0 under treatment
    y1, y0 = gen_potential_outcomes(spec, [[0.2, 0.2, 0.1]], rng, noise=1.5)
    assert (int(y1[0]), int(y0[0])) == (3, 1)


def test_multinomial_uniform_at_origin():
    for d in (0, 1):
        np.testing.assert_allclose(class_probabilities("multinomial", np.zeros((1, 3)), d), 1 / 3, atol=1e-15)


@pytest.mark.parametrize("kind", ["multinomial", "ordered"])
def test_class_probabilities_normalised(rng, kind):
    X = rng.uniform(size=(100, 3))
    for d in (0, 1):
        p = class_probabilities(kind, X, d)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_iv_first_stage_one_third():
    s = gen_sample(DgpSpec("iv", "ordered", 20_000, seed=1))
    z, d = s.instrument, s.treatment
    assert d[z == 1].mean() - d[z == 0].mean() == pytest.approx(1 / 3, abs=0.02)


def test_iv_monotone_compliance(rng):
    X = rng.uniform(size=(1000, 3))
    assert np.all(propensity("iv", X, 1) >= propensity("iv", X, 0))


def test_rd_treatment_is_sharp():
    s = gen_sample(DgpSpec("rd", "ordered", 500, seed=2))
    np.testing.assert_array_equal(s.treatment, (s.running_var >= 0.5).astype(int))
    np.testing.assert_array_equal(s.running_var, s.covariates[:, 0])


@pytest.mark.parametrize("design", ["soo-random", "soo-obs"])
def test_treated_share(design):
    s = gen_sample(DgpSpec(design, "multinomial", 4000, seed=3))
    assert 0.45 <= s.treatment.mean() <= 0.55


def test_did_panel_layout():
    s = gen_sample(DgpSpec("did", "ordered", 100, seed=4))
    assert s.n == 200
    np.testing.assert_array_equal(s.period, np.repeat([0, 1], 100))
    np.testing.assert_array_equal(s.treatment[:100], s.treatment[100:])


# reference truths, quoted to two decimals
REFERENCE = [
    (DgpSpec("soo-random", "multinomial"), None, (0.00, -0.05, 0.05)),
    (DgpSpec("soo-random", "ordered"), None, (-0.58, 0.00, 0.58)),
    (DgpSpec("iv", "ordered"), None, (-0.58, 0.00, 0.58)),
    (DgpSpec("rd", "ordered"), None, (-0.60, 0.00, 0.60)),
    (DgpSpec("did", "ordered"), None, (-0.55, -0.06, 0.61)),
]


@pytest.mark.parametrize("spec,estimand,quoted", REFERENCE)
def test_truths_match_two_decimals(spec, estimand, quoted):
    t = true_shift(spec, estimand)
    assert np.all(np.abs(t.values - np.array(quoted)) <= 0.005 + 3 * t.mc_se)


@pytest.mark.parametrize("design", ["soo-random", "soo-obs", "iv", "rd", "did"])
@pytest.mark.parametrize("kind", ["multinomial", "ordered"])
def test_truth_balanced(design, kind):
    t = true_shift(DgpSpec(design, kind), draws=20_000)
    assert abs(t.values.sum()) <= 1e-12


def test_lps_equals_ps_for_constant_compliance_share():
    # e(x, 1) - e(x, 0) = 1/3 for every x, so compliers are representative
    lps = true_shift(DgpSpec("iv", "ordered"))
    ps = true_shift(DgpSpec("soo-random", "ordered"))
    assert np.all(np.abs(lps.values - ps.values) <= 3 * (lps.mc_se + ps.mc_se))


def test_truth_independent_of_sample_seed():
    a = true_shift(DgpSpec("soo-obs", "ordered", seed=1), draws=5000)
    b = true_shift(DgpSpec("soo-obs", "ordered", seed=2), draws=5000)
    np.testing.assert_array_equal(a.values, b.values)


def test_single_replication_report():
    rep = run_monte_carlo(DgpSpec("iv", "ordered", 500, seed=1), R=1)
    np.testing.assert_array_equal(rep.sd, 0.0)
    assert set(np.unique(rep.coverage)) <= {0.0, 1.0}
    assert rep.to_csv().count("\n") == 4


def test_monte_carlo_parallel_matches_serial():
    spec = DgpSpec("soo-random", "multinomial", 600, seed=5)
    a = run_monte_carlo(spec, R=6)
    b = run_monte_carlo(spec, R=6, n_jobs=2)
    assert a.to_csv() == b.to_csv()
    np.testing.assert_array_equal(a.estimates, b.estimates)


def test_monte_carlo_seed_changes_results():
    a = run_monte_carlo(DgpSpec("did", "ordered", 300, seed=1), R=5)
    b = run_monte_carlo(DgpSpec("did", "ordered", 300, seed=2), R=5)
    assert a.to_csv() != b.to_csv()


def test_estimator_config_pst():
    spec = DgpSpec("soo-obs", "ordered", 800, seed=3)
    rep = run_monte_carlo(spec, EstimatorConfig(estimand="PST"), R=2)
    assert rep.estimand == "PST" and rep.n_failed == 0


def test_bad_spec():
    with pytest.raises(ValueError):
        DgpSpec("nope", "ordered")
    with pytest.raises(ValueError):
        DgpSpec("iv", "nominal")
