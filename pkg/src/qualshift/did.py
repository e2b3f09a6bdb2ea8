"""Two-group, two-period difference-in-differences on category indicators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import QualSample, ShiftEstimate, ValidationError, validate_sample

__all__ = ["EmptyCell", "UnbalancedPanel", "DidFit", "cell_proportions", "fit_did", "estimate_pst_did"]


class EmptyCell(ValidationError):
    def __init__(self, d: int, s: int):
        self.d, self.s = d, s
        super().__init__(f"no observations with D={d} in period {'post' if s else 'pre'}")


class UnbalancedPanel(ValidationError):
    def __init__(self, unit, detail: str = "is not observed in both periods"):
        self.unit = unit
        super().__init__(f"unit {unit!r} {detail}")


@dataclass(frozen=True)
class DidFit:
    proportions: np.ndarray  # [d, s, m]
    plug_in: np.ndarray
    beta: np.ndarray  # 4 x M: intercept, D, post, D*post
    se: np.ndarray
    se_type: str
    n_clusters: int


def cell_proportions(sample: QualSample) -> np.ndarray:
    """Share of each category in each (group, period) cell, shape (2, 2, M)."""
    Y = sample.indicators()
    out = np.empty((2, 2, Y.shape[1]))
    for d in (0, 1):
        for s in (0, 1):
            cell = (sample.treatment == d) & (sample.period == s)
            if not cell.any():
                raise EmptyCell(d, s)
            out[d, s] = Y[cell].mean(axis=0)
    return out


def _cluster_codes(ids: np.ndarray) -> np.ndarray:
    # codes in order of first appearance, independent of the id dtype
    _, first, inv = np.unique(ids, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inv.ravel()]


def fit_did(sample: QualSample) -> DidFit:
    """OLS of each indicator on ``1, D, post, D * post``.

    Standard errors are clustered by ``unit_id`` with CR1 scaling
    ``G / (G - 1) * (N - 1) / (N - k)``; without unit ids they are HC1.
    """
    validate_sample(sample, "did")
    P = cell_proportions(sample)
    plug_in = (P[1, 1] - P[1, 0]) - (P[0, 1] - P[0, 0])
    d = sample.treatment.astype(float)
    s = sample.period.astype(float)
    X = np.column_stack([np.ones(sample.n), d, s, d * s])
    Y = sample.indicators()
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    U = Y - X @ beta
    N, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    M = Y.shape[1]
    se = np.empty(M)
    if sample.unit_id is not None:
        g = _cluster_codes(sample.unit_id)
        G = int(g.max()) + 1
        scale = G / (G - 1) * (N - 1) / (N - k)
        se_type = "CR1"
        for m in range(M):
            S = np.zeros((G, k))
            np.add.at(S, g, X * U[:, m, None])
            V = bread @ (S.T @ S) @ bread * scale
            se[m] = np.sqrt(max(V[3, 3], 0.0))
    else:
        G = N
        scale = N / (N - k)
        se_type = "HC1"
        for m in range(M):
            meat = (X * U[:, m, None] ** 2).T @ X
            V = bread @ meat @ bread * scale
            se[m] = np.sqrt(max(V[3, 3], 0.0))
    return DidFit(P, plug_in, beta, se, se_type, G)


def estimate_pst_did(sample: QualSample, alpha: float = 0.05) -> ShiftEstimate:
    """Probability shift on the treated under parallel trends in category shares.

    The point estimate is the difference in differences of cell shares,
    which equals the interaction coefficient of the saturated regression.
    """
    fit = fit_did(sample)
    diag = {
        "se_type": fit.se_type,
        "n_clusters": fit.n_clusters,
        "max_ols_gap": float(np.max(np.abs(fit.plug_in - fit.beta[3]))),
        "cell_proportions": fit.proportions.tolist(),
    }
    return ShiftEstimate.from_arrays("PST", sample.labels, fit.plug_in, fit.se, alpha, diag)
