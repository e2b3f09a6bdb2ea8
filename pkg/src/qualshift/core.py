"""Data model for qualitative-outcome causal problems.

A :class:`QualSample` stores categorical outcomes recoded to the contiguous
codes ``1..M`` together with the original labels, a binary treatment, a
covariate matrix and the optional design fields (instrument, running
variable, panel period).  Estimators return a :class:`ShiftEstimate`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.stats import norm

__all__ = [
    "DESIGNS",
    "ESTIMANDS",
    "QualError",
    "ValidationError",
    "EstimationError",
    "MissingField",
    "EmptyArm",
    "LabelOutOfRange",
    "AbsentCategory",
    "ShiftsNotBalanced",
    "QualSample",
    "CategoryShift",
    "ShiftEstimate",
    "validate_sample",
    "naive_ate_decomposition",
    "read_csv",
    "write_csv",
]

DESIGNS = ("soo", "iv", "rd", "did")
ESTIMANDS = ("PS", "PST", "LPS", "PSC")


class QualError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(QualError, ValueError):
    """The input data do not satisfy the requirements of a design."""


class EstimationError(QualError, RuntimeError):
    """An estimator could not produce a result."""


class MissingField(ValidationError):
    def __init__(self, design: str, field_name: str):
        self.design = design
        self.field_name = field_name
        super().__init__(f"design {design!r} requires field {field_name!r}")


class EmptyArm(ValidationError):
    def __init__(self, arm: int, what: str = "treatment"):
        self.arm = arm
        super().__init__(f"{what} arm {arm} has no units")


class LabelOutOfRange(ValidationError):
    def __init__(self, index: int, label: Any = None):
        self.index = index
        super().__init__(f"outcome label {label!r} of unit {index} is not a declared category")


class AbsentCategory(ValidationError):
    def __init__(self, label: Any):
        self.label = label
        super().__init__(f"declared category {label!r} never appears in the outcome")


class ShiftsNotBalanced(ValidationError):
    def __init__(self, total: float):
        self.total = total
        super().__init__(f"probability shifts sum to {total:.3e}, expected 0")


def _frozen(a: np.ndarray | None, dtype=None) -> np.ndarray | None:
    if a is None:
        return None
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QualSample:
    """One qualitative-outcome data set.

    ``outcome`` holds integer codes in ``1..M``; ``labels[m - 1]`` is the
    user-facing label of code ``m``.  Use :meth:`from_arrays` to build a
    sample from arbitrary labels.
    """

    outcome: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    labels: tuple = ()
    instrument: np.ndarray | None = None
    running_var: np.ndarray | None = None
    cutoff: float | None = None
    period: np.ndarray | None = None
    unit_id: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.outcome)
        n = y.shape[0]
        object.__setattr__(self, "outcome", _frozen(y, np.int64))
        object.__setattr__(self, "treatment", _frozen(self.treatment, np.int64))
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(n, -1) if cov.size else np.empty((n, 0))
        object.__setattr__(self, "covariates", _frozen(cov))
        object.__setattr__(self, "instrument", _frozen(self.instrument, np.int64))
        object.__setattr__(self, "running_var", _frozen(self.running_var, float))
        object.__setattr__(self, "period", _frozen(self.period, np.int64))
        object.__setattr__(self, "unit_id", _frozen(self.unit_id))
        if not self.labels:
            m = int(y.max()) if n else 0
            object.__setattr__(self, "labels", tuple(range(1, m + 1)))
        else:
            object.__setattr__(self, "labels", tuple(self.labels))
        for name in ("treatment", "covariates", "instrument", "running_var", "period", "unit_id"):
            a = getattr(self, name)
            if a is not None and a.shape[0] != n:
                raise ValidationError(f"{name} has {a.shape[0]} rows, outcome has {n}")

    @classmethod
    def from_arrays(
        cls,
        outcome: Sequence,
        treatment: Sequence,
        covariates: Any = None,
        *,
        categories: Sequence | None = None,
        **kwargs,
    ) -> "QualSample":
        """Build a sample, recoding arbitrary outcome labels to ``1..M``.

        Without ``categories`` the sorted distinct observed labels define the
        categories.  With ``categories`` every outcome must be one of them and
        each of them must be observed.
        """
        raw = np.asarray(outcome)
        n = raw.shape[0]
        observed = np.unique(raw)
        if categories is None:
            cats = [c.item() if hasattr(c, "item") else c for c in observed]
        else:
            cats = list(categories)
            index = {c: j for j, c in enumerate(cats)}
            for i, v in enumerate(raw.tolist()):
                if v not in index:
                    raise LabelOutOfRange(i, v)
            seen = set(observed.tolist())
            for c in cats:
                if c not in seen:
                    raise AbsentCategory(c)
        index = {c: j + 1 for j, c in enumerate(cats)}
        codes = np.fromiter((index[v] for v in raw.tolist()), dtype=np.int64, count=n)
        if covariates is None:
            covariates = np.empty((n, 0))
        return cls(codes, treatment, covariates, labels=tuple(cats), **kwargs)

    @property
    def n(self) -> int:
        return int(self.outcome.shape[0])

    @property
    def n_categories(self) -> int:
        return len(self.labels)

    def indicators(self) -> np.ndarray:
        """n x M matrix of ``1{Y_i = m}``."""
        m = np.arange(1, self.n_categories + 1)
        return (self.outcome[:, None] == m[None, :]).astype(float)

    def subset(self, mask: np.ndarray) -> "QualSample":
        """Rows selected by ``mask``, keeping the category set."""
        def take(a):
            return None if a is None else a[mask]

        return QualSample(
            self.outcome[mask],
            self.treatment[mask],
            self.covariates[mask],
            labels=self.labels,
            instrument=take(self.instrument),
            running_var=take(self.running_var),
            cutoff=self.cutoff,
            period=take(self.period),
            unit_id=take(self.unit_id),
        )


def validate_sample(sample: QualSample, design: str) -> QualSample:
    """Check that ``sample`` is usable under ``design`` and return it.

    Raises one of :class:`MissingField`, :class:`EmptyArm`,
    :class:`LabelOutOfRange` or :class:`ValidationError`.  The function is
    idempotent: a validated sample is returned unchanged.
    """
    if design not in DESIGNS:
        raise ValidationError(f"unknown design {design!r}; expected one of {DESIGNS}")
    n = sample.n
    if n == 0:
        raise ValidationError("sample is empty")
    M = sample.n_categories
    if M < 2:
        raise ValidationError("at least two outcome categories are required")
    bad = np.flatnonzero((sample.outcome < 1) | (sample.outcome > M))
    if bad.size:
        i = int(bad[0])
        raise LabelOutOfRange(i, int(sample.outcome[i]))
    if not np.all(np.isfinite(sample.covariates)):
        raise ValidationError("covariate matrix has non-finite entries")

    _check_binary(sample.treatment, "treatment")
    if design != "rd":
        for arm in (0, 1):
            if not np.any(sample.treatment == arm):
                raise EmptyArm(arm)

    if design == "iv":
        if sample.instrument is None:
            raise MissingField(design, "instrument")
        _check_binary(sample.instrument, "instrument")
        for arm in (0, 1):
            if not np.any(sample.instrument == arm):
                raise EmptyArm(arm, "instrument")
    elif design == "rd":
        if sample.running_var is None:
            raise MissingField(design, "running_var")
        if sample.cutoff is None:
            raise MissingField(design, "cutoff")
        if not np.all(np.isfinite(sample.running_var)):
            raise ValidationError("running variable has non-finite entries")
        above = sample.running_var >= sample.cutoff
        if not above.any():
            raise EmptyArm(1, "above-cutoff")
        if above.all():
            raise EmptyArm(0, "below-cutoff")
    elif design == "did":
        if sample.period is None:
            raise MissingField(design, "period")
        _check_binary(sample.period, "period")
        if sample.unit_id is not None:
            _check_panel(sample)
    return sample


def _check_binary(a: np.ndarray, name: str) -> None:
    if not np.all((a == 0) | (a == 1)):
        raise ValidationError(f"{name} must be coded 0/1")


def _check_panel(sample: QualSample) -> None:
    from .did import UnbalancedPanel

    ids = sample.unit_id
    for s in (0, 1):
        u, counts = np.unique(ids[sample.period == s], return_counts=True)
        if np.any(counts > 1):
            raise UnbalancedPanel(u[counts > 1][0], f"appears more than once in period {s}")
    pre = set(np.unique(ids[sample.period == 0]).tolist())
    post = set(np.unique(ids[sample.period == 1]).tolist())
    missing = pre.symmetric_difference(post)
    if missing:
        raise UnbalancedPanel(sorted(missing, key=str)[0], "is not observed in both periods")
    # the group indicator must be a unit attribute
    _, codes = np.unique(ids, return_inverse=True)
    order = np.lexsort((sample.period, codes.ravel()))
    d = sample.treatment[order].reshape(-1, 2)
    if np.any(d[:, 0] != d[:, 1]):
        raise ValidationError("treatment group must be constant within unit")


@dataclass(frozen=True)
class CategoryShift:
    label: Any
    point: float
    se: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class ShiftEstimate:
    """Per-category estimates of a probability-shift estimand.

    Confidence intervals are ``point -/+ z * se`` and are not truncated to
    ``[-1, 1]``.
    """

    estimand: str
    per_category: tuple
    alpha: float = 0.05
    diagnostics: dict = field(default_factory=dict)
    warnings: tuple = ()

    @classmethod
    def from_arrays(cls, estimand, labels, points, ses, alpha=0.05, diagnostics=None, warnings=()):
        if estimand not in ESTIMANDS:
            raise ValueError(f"unknown estimand {estimand!r}")
        z = float(norm.ppf(1 - alpha / 2))
        rows = tuple(
            CategoryShift(lab, float(p), float(s), float(p - z * s), float(p + z * s))
            for lab, p, s in zip(labels, points, ses)
        )
        return cls(estimand, rows, alpha, dict(diagnostics or {}), tuple(warnings))

    @property
    def points(self) -> np.ndarray:
        return np.array([c.point for c in self.per_category])

    @property
    def ses(self) -> np.ndarray:
        return np.array([c.se for c in self.per_category])

    @property
    def ci(self) -> np.ndarray:
        """M x 2 array of interval bounds."""
        return np.array([(c.ci_low, c.ci_high) for c in self.per_category])

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "estimand": self.estimand,
            "alpha": self.alpha,
            "categories": [
                {"label": c.label, "point": c.point, "se": c.se, "ci_low": c.ci_low, "ci_high": c.ci_high}
                for c in self.per_category
            ],
            "diagnostics": self.diagnostics,
            "warnings": list(self.warnings),
        }


def naive_ate_decomposition(shifts: Sequence[float], labels: Sequence[float] | None = None) -> float:
    """Treat the outcome as numeric: ``sum_m label(m) * shift_m``.

    The value depends on the arbitrary labelling; it is provided only as a
    diagnostic.  ``labels`` defaults to ``1..M``.
    """
    s = np.asarray(shifts, dtype=float)
    total = math.fsum(s)
    if abs(total) > 1e-10:
        raise ShiftsNotBalanced(total)
    lab = np.arange(1, s.size + 1) if labels is None else np.asarray(labels, dtype=float)
    if lab.shape != s.shape:
        raise ValueError("labels and shifts must have the same length")
    return math.fsum(lab * s)


# -- CSV ---------------------------------------------------------------------

_RESERVED = ("y", "d", "z", "run")


def read_csv(path, *, cutoff: float | None = None, period_col: str = "period", unit_col: str = "unit_id") -> QualSample:
    """Read a sample from a headed CSV file.

    Recognised columns are ``y``, ``d``, ``z``, ``run``, the period column
    (0 = pre, 1 = post) and the unit column; every other column is a
    covariate.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    for req in ("y", "d"):
        if req not in header:
            raise ValidationError(f"{path}: missing required column {req!r}")
    cols = {h: j for j, h in enumerate(header)}
    width = len(header)
    for lineno, r in enumerate(rows, start=2):
        if len(r) != width:
            raise ValidationError(f"{path}:{lineno}: expected {width} fields, got {len(r)}")

    def column(name, conv):
        j = cols[name]
        out = []
        for lineno, r in enumerate(rows, start=2):
            try:
                out.append(conv(r[j]))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad value {r[j]!r} in column {name!r}") from None
        return out

    y = column("y", int)
    d = column("d", int)
    special = set(_RESERVED) | {period_col, unit_col}
    cov_names = [h for h in header if h not in special]
    X = np.array([column(h, float) for h in cov_names], dtype=float).T if cov_names else np.empty((len(rows), 0))
    kwargs: dict = {}
    if "z" in cols:
        kwargs["instrument"] = column("z", int)
    if "run" in cols:
        kwargs["running_var"] = column("run", float)
    if period_col in cols:
        kwargs["period"] = column(period_col, int)
    if unit_col in cols:
        kwargs["unit_id"] = column(unit_col, str)
    if cutoff is not None:
        kwargs["cutoff"] = float(cutoff)
    return QualSample.from_arrays(y, d, X.reshape(len(rows), -1), **kwargs)


def write_csv(sample: QualSample, path, *, covariate_names: Iterable[str] | None = None) -> None:
    """Write ``sample`` in the format read by :func:`read_csv`.

    Floats are written with ``repr`` so that a round trip is exact.
    """
    p = sample.covariates.shape[1]
    names = list(covariate_names) if covariate_names is not None else [f"x{j + 1}" for j in range(p)]
    header = ["y", "d"]
    extra = []
    if sample.instrument is not None:
        header.append("z")
        extra.append(sample.instrument)
    if sample.running_var is not None:
        header.append("run")
        extra.append(sample.running_var)
    if sample.period is not None:
        header.append("period")
        extra.append(sample.period)
    if sample.unit_id is not None:
        header.append("unit_id")
        extra.append(sample.unit_id)
    header += names
    labels = sample.labels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(sample.n):
            row = [labels[sample.outcome[i] - 1], int(sample.treatment[i])]
            for a in extra:
                v = a[i]
                row.append(repr(float(v)) if a.dtype.kind == "f" else str(v))
            row += [repr(float(v)) for v in sample.covariates[i]]
            w.writerow(row)


def with_cutoff(sample: QualSample, cutoff: float) -> QualSample:
    return replace(sample, cutoff=float(cutoff))
