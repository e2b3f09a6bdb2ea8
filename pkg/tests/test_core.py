import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qualshift.core import (
    AbsentCategory,
    EmptyArm,
    LabelOutOfRange,
    MissingField,
    QualSample,
    ShiftEstimate,
    ShiftsNotBalanced,
    ValidationError,
    naive_ate_decomposition,
    read_csv,
    validate_sample,
    write_csv,
)


def test_validate_well_formed_infers_categories():
    s = QualSample.from_arrays([1, 2, 3, 1, 2, 3], [0, 0, 0, 1, 1, 1], np.zeros((6, 1)))
    out = validate_sample(s, "soo")
    assert out.n_categories == 3
    assert out is s


def test_validate_empty_arm():
    s = QualSample.from_arrays([1, 2, 1], [1, 1, 1])
    with pytest.raises(EmptyArm) as exc:
        validate_sample(s, "soo")
    assert exc.value.arm == 0


def test_validate_iv_requires_instrument():
    s = QualSample.from_arrays([1, 2, 1, 2], [0, 1, 0, 1])
    with pytest.raises(MissingField) as exc:
        validate_sample(s, "iv")
    assert (exc.value.design, exc.value.field_name) == ("iv", "instrument")


@pytest.mark.parametrize(
    "design, kwargs, missing",
    [
        ("rd", {}, "running_var"),
        ("rd", {"running_var": [0.1, 0.6, 0.2, 0.7]}, "cutoff"),
        ("did", {}, "period"),
    ],
)
def test_validate_design_fields(design, kwargs, missing):
    s = QualSample.from_arrays([1, 2, 1, 2], [0, 1, 0, 1], **kwargs)
    with pytest.raises(MissingField, match=missing):
        validate_sample(s, design)


def test_label_out_of_range():
    s = QualSample([1, 2, 4], [0, 1, 0], np.zeros((3, 0)), labels=(1, 2, 3))
    with pytest.raises(LabelOutOfRange) as exc:
        validate_sample(s, "soo")
    assert exc.value.index == 2
    with pytest.raises(LabelOutOfRange):
        QualSample.from_arrays(["a", "b", "c"], [0, 1, 0], categories=["a", "b"])


def test_declared_category_must_appear():
    with pytest.raises(AbsentCategory):
        QualSample.from_arrays(["a", "b"], [0, 1], categories=["a", "b", "c"])


def test_non_finite_covariates_rejected():
    s = QualSample.from_arrays([1, 2, 1, 2], [0, 1, 0, 1], [[0.0], [np.nan], [1.0], [2.0]])
    with pytest.raises(ValidationError, match="non-finite"):
        validate_sample(s, "soo")


def test_labels_are_recoded_and_kept():
    s = QualSample.from_arrays(["low", "high", "mid", "low"], [0, 1, 0, 1], categories=["low", "mid", "high"])
    assert s.outcome.tolist() == [1, 3, 2, 1]
    assert s.labels == ("low", "mid", "high")


def test_sample_is_immutable():
    s = QualSample.from_arrays([1, 2], [0, 1])
    with pytest.raises(ValueError):
        s.outcome[0] = 2
    with pytest.raises(AttributeError):
        s.cutoff = 1.0


def test_validate_idempotent(soo_sample):
    once = validate_sample(soo_sample, "soo")
    twice = validate_sample(once, "soo")
    assert twice is once
    np.testing.assert_array_equal(twice.outcome, soo_sample.outcome)


@pytest.mark.parametrize(
    "shifts, labels, expected",
    [
        ((0.00, -0.05, 0.05), (1, 2, 3), 0.05),  # 1*0 + 2*(-0.05) + 3*0.05
        ((0.00, -0.05, 0.05), (3, 2, 1), -0.05),  # 3*0 + 2*(-0.05) + 1*0.05
        ((0.0, 0.0, 0.0), (2, 3, 1), 0.0),
    ],
)
def test_naive_ate_decomposition(shifts, labels, expected):
    assert naive_ate_decomposition(shifts, labels) == pytest.approx(expected, abs=1e-15)


def test_naive_ate_requires_balance():
    with pytest.raises(ShiftsNotBalanced):
        naive_ate_decomposition([0.1, 0.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5, allow_nan=False), min_size=2, max_size=6))
def test_naive_ate_sign_depends_on_labels(raw):
    shifts = np.array(raw) - np.mean(raw)
    shifts[-1] = -np.sum(shifts[:-1])
    if abs(np.sum(shifts)) > 1e-10 or np.sum(np.abs(shifts) > 1e-6) < 2:
        return
    values = [naive_ate_decomposition(shifts, perm) for perm in itertools.permutations(range(1, len(shifts) + 1))]
    assert min(values) < 0 < max(values)


def test_shift_estimate_intervals():
    est = ShiftEstimate.from_arrays("PS", (1, 2), [0.1, -0.1], [0.02, 0.02], alpha=0.05)
    width = est.ci[:, 1] - est.ci[:, 0]
    np.testing.assert_allclose(width, 2 * 1.959963984540054 * 0.02, rtol=1e-12)
    assert np.all(est.ci[:, 0] <= est.points) and np.all(est.points <= est.ci[:, 1])
    d = est.to_dict()
    assert d["schema"] == 1 and len(d["categories"]) == 2


def test_intervals_not_truncated():
    est = ShiftEstimate.from_arrays("PS", (1, 2), [0.99, -0.99], [0.1, 0.1])
    assert est.ci[0, 1] > 1.0 and est.ci[1, 0] < -1.0


def test_csv_round_trip(tmp_path, rng):
    n = 12
    s = QualSample.from_arrays(
        rng.integers(1, 4, n), np.arange(n) % 2, rng.normal(size=(n, 2)),
        instrument=(np.arange(n) // 2) % 2, running_var=rng.uniform(size=n),
    )
    path = tmp_path / "s.csv"
    write_csv(s, path)
    back = read_csv(path)
    np.testing.assert_array_equal(back.outcome, s.outcome)
    np.testing.assert_array_equal(back.covariates, s.covariates)
    np.testing.assert_array_equal(back.running_var, s.running_var)
    np.testing.assert_array_equal(back.instrument, s.instrument)
    assert back.labels == s.labels


def test_csv_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,d,x1\n1,0,0.5\n2,oops,0.1\n")
    with pytest.raises(ValidationError, match=":3:"):
        read_csv(path)
