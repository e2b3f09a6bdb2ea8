"""Selection-on-observables: doubly robust PS and PST with cross-fitting."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import EstimationError, QualSample, ShiftEstimate, validate_sample
from .nuisance import DEFAULT_RIDGE, NuisancePredictions, cross_fit_nuisances, fit_multinomial_logit

__all__ = [
    "NonFiniteScore",
    "DrScoreTable",
    "dr_scores",
    "att_scores",
    "estimate_ps",
    "estimate_pst",
    "conditional_shift",
    "PROPENSITY_CLIP",
    "CLIP_WARN_RATE",
]

PROPENSITY_CLIP = (0.01, 0.99)
CLIP_WARN_RATE = 0.02


class NonFiniteScore(EstimationError):
    def __init__(self, i: int, m: int):
        self.i, self.m = i, m
        super().__init__(f"non-finite doubly robust score for unit {i}, category {m}")


@dataclass(frozen=True)
class DrScoreTable:
    scores: np.ndarray  # n x M
    target: str = "PS"
    clip_rate: float = 0.0


def _clip(e, clip):
    lo, hi = clip
    e = np.asarray(e, dtype=float)
    rate = float(np.mean((e < lo) | (e > hi)))
    return np.clip(e, lo, hi), rate


def _check_finite(G):
    bad = np.argwhere(~np.isfinite(G))
    if bad.size:
        i, m = map(int, bad[0])
        raise NonFiniteScore(i, m + 1)


def dr_scores(sample: QualSample, preds: NuisancePredictions, clip=PROPENSITY_CLIP) -> DrScoreTable:
    """Doubly robust scores for the probability shift of every category.

    ``G[i, m] = p1 - p0 + D (1{Y=m} - p1) / e - (1 - D) (1{Y=m} - p0) / (1 - e)``
    with all nuisances evaluated at ``X_i`` and ``e`` clipped to ``clip``.
    """
    e, rate = _clip(preds.e, clip)
    ind = sample.indicators()
    d = sample.treatment[:, None].astype(float)
    e = e[:, None]
    with np.errstate(all="ignore"):
        G = (
            preds.p1 - preds.p0
            + d * (ind - preds.p1) / e
            - (1.0 - d) * (ind - preds.p0) / (1.0 - e)
        )
    _check_finite(G)
    return DrScoreTable(G, "PS", rate)


def att_scores(sample: QualSample, preds: NuisancePredictions, clip=PROPENSITY_CLIP) -> DrScoreTable:
    """Doubly robust scores for the shift on the treated.

    Uses the ATT moment ``(D - (1 - D) e / (1 - e)) (1{Y=m} - p0) / rho``
    where ``rho`` is the treated share.  The column means are the PST
    estimates.
    """
    e, rate = _clip(preds.e, clip)
    ind = sample.indicators()
    d = sample.treatment.astype(float)
    rho = d.mean()
    w = (d - (1.0 - d) * e / (1.0 - e)) / rho
    G = w[:, None] * (ind - preds.p0)
    _check_finite(G)
    return DrScoreTable(G, "PST", rate)


def _column_means(G: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(G[:, m]) / G.shape[0] for m in range(G.shape[1])])


def _score_se(G: np.ndarray, points: np.ndarray) -> np.ndarray:
    """sqrt(mean((G - point)^2) / n) per column."""
    n = G.shape[0]
    dev = G - points[None, :]
    var = np.array([math.fsum(dev[:, m] ** 2) / n for m in range(G.shape[1])])
    return np.sqrt(var / n)


def _diagnostics(preds, table, K, seed):
    diag = {
        "K": K,
        "seed": seed,
        "attempts_used": preds.plan.attempts_used if preds.plan is not None else 0,
        "clip_rate": table.clip_rate,
    }
    warns = []
    if table.clip_rate > CLIP_WARN_RATE:
        msg = f"{table.clip_rate:.1%} of propensity scores clipped to {PROPENSITY_CLIP}; check common support"
        warns.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return diag, warns


def estimate_ps(
    sample: QualSample,
    K: int = 5,
    seed: int = 0,
    alpha: float = 0.05,
    ridge: float = DEFAULT_RIDGE,
    preds: NuisancePredictions | None = None,
) -> ShiftEstimate:
    """Cross-fitted doubly robust estimate of the probability shift.

    The point estimate is the mean score; its standard error is
    ``sqrt(mean((score - mean)^2) / n)``.  Pre-computed nuisance
    predictions may be passed as ``preds``.
    """
    validate_sample(sample, "soo")
    if preds is None:
        preds = cross_fit_nuisances(sample, K, seed, ridge)
    table = dr_scores(sample, preds)
    points = _column_means(table.scores)
    ses = _score_se(table.scores, points)
    diag, warns = _diagnostics(preds, table, K, seed)
    return ShiftEstimate.from_arrays("PS", sample.labels, points, ses, alpha, diag, warns)


def estimate_pst(
    sample: QualSample,
    K: int = 5,
    seed: int = 0,
    alpha: float = 0.05,
    method: str = "dr",
    ridge: float = DEFAULT_RIDGE,
    preds: NuisancePredictions | None = None,
) -> ShiftEstimate:
    """Probability shift on the treated.

    ``method="dr"`` averages doubly robust ATT scores; the standard error
    uses the influence function ``score - D * point / rho``.
    ``method="plugin"`` averages ``1{Y=m} - p0_m(X)`` over treated units.
    """
    validate_sample(sample, "soo")
    if method not in ("dr", "plugin"):
        raise ValueError("method must be 'dr' or 'plugin'")
    if preds is None:
        preds = cross_fit_nuisances(sample, K, seed, ridge)
    d = sample.treatment.astype(float)
    if method == "dr":
        table = att_scores(sample, preds)
        points = _column_means(table.scores)
        infl = table.scores - (d / d.mean())[:, None] * points[None, :]
        ses = _score_se(infl, np.zeros_like(points))
    else:
        treated = sample.treatment == 1
        resid = (sample.indicators() - preds.p0)[treated]
        _check_finite(resid)
        table = DrScoreTable(resid, "PST", 0.0)
        points = _column_means(resid)
        ses = _score_se(resid, points)
    diag, warns = _diagnostics(preds, table, K, seed)
    diag["method"] = method
    return ShiftEstimate.from_arrays("PST", sample.labels, points, ses, alpha, diag, warns)


def conditional_shift(sample: QualSample, x, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Point readout of ``p_m(1, x) - p_m(0, x)`` from full-sample fits.

    No inference is attached.  Returns an array of shape (len(x), M).
    """
    validate_sample(sample, "soo")
    M = sample.n_categories
    X, y, d = sample.covariates, sample.outcome, sample.treatment
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m1 = fit_multinomial_logit(X[d == 1], y[d == 1], ridge, n_categories=M, arm=1)
    m0 = fit_multinomial_logit(X[d == 0], y[d == 0], ridge, n_categories=M, arm=0)
    return m1.predict_proba(x) - m0.predict_proba(x)

