"""Local probability shift by two-stage least squares with a binary instrument."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import EmptyArm, EstimationError, QualSample, ShiftEstimate, validate_sample

__all__ = [
    "WeakInstrument",
    "DegenerateInstrument",
    "IvFit",
    "fit_2sls",
    "wald_ratios",
    "estimate_lps",
    "WEAK_INSTRUMENT_THRESHOLD",
]

WEAK_INSTRUMENT_THRESHOLD = 0.02


class WeakInstrument(UserWarning):
    """First-stage coefficient below the weak-instrument threshold."""


class DegenerateInstrument(EstimationError):
    pass


@dataclass(frozen=True)
class IvFit:
    first_stage: tuple  # (gamma0, gamma1)
    intercepts: np.ndarray  # alpha_m0
    slopes: np.ndarray  # alpha_m1
    se: np.ndarray
    se_type: str

    @property
    def strength(self) -> float:
        return self.first_stage[1]


def fit_2sls(sample: QualSample, se_type: str = "hc0") -> IvFit:
    """Regress each ``1{Y=m}`` on the first-stage fitted treatment.

    Standard errors use structural residuals ``1{Y=m} - a0 - a1 D``;
    ``se_type`` is ``"hc0"`` (heteroskedasticity-robust) or
    ``"classical"``.
    """
    if se_type not in ("hc0", "classical"):
        raise ValueError("se_type must be 'hc0' or 'classical'")
    z = sample.instrument.astype(float)
    d = sample.treatment.astype(float)
    n = sample.n
    for arm in (0, 1):
        if not np.any(sample.instrument == arm):
            raise DegenerateInstrument(f"instrument arm {arm} is empty")
    Z = np.column_stack([np.ones(n), z])
    gamma, *_ = np.linalg.lstsq(Z, d, rcond=None)
    if gamma[1] == 0.0:
        raise DegenerateInstrument("first-stage coefficient is exactly zero")
    Xhat = np.column_stack([np.ones(n), Z @ gamma])
    Y = sample.indicators()
    alpha, *_ = np.linalg.lstsq(Xhat, Y, rcond=None)  # 2 x M
    U = Y - np.column_stack([np.ones(n), d]) @ alpha
    bread = np.linalg.inv(Xhat.T @ Xhat)
    M = Y.shape[1]
    se = np.empty(M)
    for m in range(M):
        if se_type == "hc0":
            meat = (Xhat * U[:, m, None] ** 2).T @ Xhat
            V = bread @ meat @ bread
        else:
            V = bread * (U[:, m] @ U[:, m]) / (n - 2)
        se[m] = np.sqrt(max(V[1, 1], 0.0))
    return IvFit((float(gamma[0]), float(gamma[1])), alpha[0], alpha[1], se, se_type)


def wald_ratios(sample: QualSample) -> np.ndarray:
    """Reduced-form differences in category shares over the first stage."""
    z = sample.instrument
    Y = sample.indicators()
    d = sample.treatment.astype(float)
    num = Y[z == 1].mean(axis=0) - Y[z == 0].mean(axis=0)
    den = d[z == 1].mean() - d[z == 0].mean()
    return num / den


def estimate_lps(sample: QualSample, alpha: float = 0.05, se_type: str = "hc0") -> ShiftEstimate:
    """Per-category 2SLS estimate of the local probability shift.

    Covariates are ignored.  A first stage weaker than
    ``WEAK_INSTRUMENT_THRESHOLD`` triggers :class:`WeakInstrument` but the
    estimate is still returned.
    """
    try:
        validate_sample(sample, "iv")
    except EmptyArm as exc:
        if "instrument" in str(exc):
            raise DegenerateInstrument(str(exc)) from exc
        raise
    fit = fit_2sls(sample, se_type)
    wald = wald_ratios(sample)
    warns = []
    if abs(fit.strength) < WEAK_INSTRUMENT_THRESHOLD:
        msg = f"weak instrument: first-stage coefficient {fit.strength:.4f}"
        warns.append(msg)
        warnings.warn(msg, WeakInstrument, stacklevel=2)
    diag = {
        "first_stage_intercept": fit.first_stage[0],
        "first_stage_coef": fit.strength,
        "se_type": se_type,
        "max_wald_gap": float(np.max(np.abs(fit.slopes - wald))),
        "weak_instrument": bool(abs(fit.strength) < WEAK_INSTRUMENT_THRESHOLD),
    }
    return ShiftEstimate.from_arrays("LPS", sample.labels, fit.slopes, fit.se, alpha, diag, warns)
