"""Nuisance models and cross-fitting.

Conditional class probabilities ``p_m(d, x)`` are estimated with a
ridge-penalised multinomial logit (last category as reference) fit by
damped Newton iterations; the propensity score with the binary special
case.  :func:`make_folds` draws balanced fold partitions until every
category is present in every fold and treatment arm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import EmptyArm, EstimationError, QualSample, ValidationError

__all__ = [
    "SeparationError",
    "SingularHessian",
    "GuaranteeUnsatisfiable",
    "FoldFitError",
    "ClassProbModel",
    "PropensityModel",
    "FoldPlan",
    "NuisancePredictions",
    "fit_multinomial_logit",
    "fit_logit",
    "make_folds",
    "cross_fit_nuisances",
    "multinomial_loglik",
    "multinomial_score",
]

DEFAULT_RIDGE = 1e-6
MAX_RIDGE = 1e-2
SCORE_TOL = 1e-8
MAX_ITER = 100
MAX_HALVINGS = 30
# |linear predictor| beyond this means fitted probabilities of 0 or 1
SEPARATION_ETA = 30.0


class SeparationError(EstimationError):
    def __init__(self, iterations: int, reason: str = "did not converge"):
        self.iterations = iterations
        super().__init__(f"multinomial logit separation ({reason}) after {iterations} iterations")


class SingularHessian(EstimationError):
    pass


class GuaranteeUnsatisfiable(EstimationError):
    def __init__(self, attempts: int, detail: str = ""):
        self.attempts = attempts
        msg = f"no fold plan with every category in every fold and arm after {attempts} draws"
        super().__init__(msg + (f": {detail}" if detail else ""))


class FoldFitError(EstimationError):
    def __init__(self, fold: int, cause: Exception):
        self.fold = fold
        self.cause = cause
        super().__init__(f"fold {fold}: {cause}")


def _design(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])


def _softmax_ref(eta: np.ndarray) -> np.ndarray:
    """Probabilities for linear predictors of the non-reference categories.

    ``eta`` is n x (M-1); the reference category has predictor 0.
    """
    full = np.column_stack([eta, np.zeros(eta.shape[0])])
    full -= full.max(axis=1, keepdims=True)
    np.exp(full, out=full)
    full /= full.sum(axis=1, keepdims=True)
    return full


def _penalty_mask(shape) -> np.ndarray:
    mask = np.ones(shape)
    mask[:, 0] = 0.0
    return mask


def multinomial_loglik(coef: np.ndarray, Xd: np.ndarray, Y: np.ndarray, ridge: float = 0.0) -> float:
    """Penalised log-likelihood.

    ``coef`` is (M-1) x (p+1), ``Xd`` includes the intercept column and
    ``Y`` is the n x M indicator matrix.
    """
    eta = Xd @ coef.T
    full = np.column_stack([eta, np.zeros(eta.shape[0])])
    mx = full.max(axis=1)
    lse = mx + np.log(np.exp(full - mx[:, None]).sum(axis=1))
    ll = float(np.sum(Y * full) - np.sum(lse))
    return ll - 0.5 * ridge * float(np.sum((coef * _penalty_mask(coef.shape)) ** 2))


def multinomial_score(coef: np.ndarray, Xd: np.ndarray, Y: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Gradient of :func:`multinomial_loglik`, same shape as ``coef``."""
    P = _softmax_ref(Xd @ coef.T)
    R = Y[:, :-1] - P[:, :-1]
    return R.T @ Xd - ridge * coef * _penalty_mask(coef.shape)


def _hessian(coef, Xd, ridge):
    # negative Hessian, parameters ordered category-major
    P = _softmax_ref(Xd @ coef.T)[:, :-1]
    K, q = coef.shape
    H = np.empty((K * q, K * q))
    for a in range(K):
        for b in range(a, K):
            w = P[:, a] * ((a == b) - P[:, b])
            block = (Xd * w[:, None]).T @ Xd
            H[a * q:(a + 1) * q, b * q:(b + 1) * q] = block
            H[b * q:(b + 1) * q, a * q:(a + 1) * q] = block
    H += ridge * np.diag(_penalty_mask(coef.shape).ravel())
    return H


@dataclass(frozen=True)
class ClassProbModel:
    """Fitted multinomial logit for ``P(Y = m | X = x)``.

    ``coef[k]`` holds intercept and slopes of category ``k + 1`` relative
    to the reference category ``M``.
    """

    coef: np.ndarray
    fitted_on: int | None = None
    ridge: float = DEFAULT_RIDGE
    n_iter: int = 0
    loglik_trace: tuple = field(default=(), repr=False)

    @property
    def n_categories(self) -> int:
        return self.coef.shape[0] + 1

    def predict_proba(self, X) -> np.ndarray:
        """n x M matrix of category probabilities; rows sum to one."""
        return _softmax_ref(_design(X) @ self.coef.T)

    def to_json(self) -> str:
        return json.dumps({"arm": self.fitted_on, "coef": self.coef.tolist()})


@dataclass(frozen=True)
class PropensityModel:
    """Logistic model for ``e(x) = P(D = 1 | X = x)``."""

    coef: np.ndarray
    n_iter: int = 0

    def predict(self, X) -> np.ndarray:
        eta = _design(X) @ self.coef
        return 1.0 / (1.0 + np.exp(-eta))


def roundoff_slack(ll: float) -> float:
    """Log-likelihood decrease attributable to floating-point error."""
    return 64 * np.finfo(float).eps * max(1.0, abs(ll))


def _newton(Xd, Y, ridge):
    K = Y.shape[1] - 1
    q = Xd.shape[1]
    coef = np.zeros((K, q))
    # start intercepts at the log odds of the observed frequencies
    freq = Y.mean(axis=0)
    if np.all(freq > 0):
        coef[:, 0] = np.log(freq[:-1] / freq[-1])
    ll = multinomial_loglik(coef, Xd, Y, ridge)
    trace = [ll]
    for it in range(1, MAX_ITER + 1):
        g = multinomial_score(coef, Xd, Y, ridge)
        if np.max(np.abs(g)) < SCORE_TOL:
            return coef, it - 1, trace
        H = _hessian(coef, Xd, ridge)
        try:
            step = np.linalg.solve(H, g.ravel())
        except np.linalg.LinAlgError:
            raise SingularHessian(f"singular Hessian at iteration {it} with ridge {ridge:g}") from None
        if not np.all(np.isfinite(step)) or np.linalg.cond(H) > 1e14:
            raise SingularHessian(f"ill-conditioned Hessian at iteration {it} with ridge {ridge:g}")
        step = step.reshape(K, q)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = coef + t * step
            ll_new = multinomial_loglik(cand, Xd, Y, ridge)
            if ll_new >= ll - roundoff_slack(ll):
                break
            t *= 0.5
        else:
            raise SeparationError(it, "line search failed")
        coef, ll = cand, ll_new
        trace.append(ll)
        if np.max(np.abs(Xd @ coef.T)) > SEPARATION_ETA:
            raise SeparationError(it, "linear predictor diverging")
    g = multinomial_score(coef, Xd, Y, ridge)
    if np.max(np.abs(g)) < SCORE_TOL:
        return coef, MAX_ITER, trace
    raise SeparationError(MAX_ITER)


def fit_multinomial_logit(X, y, ridge: float = DEFAULT_RIDGE, n_categories: int | None = None, arm: int | None = None) -> ClassProbModel:
    """Fit a multinomial logit to category codes ``y`` in ``1..M``.

    Slopes carry an L2 penalty ``ridge / 2 * ||b||^2``; intercepts are
    unpenalised.  Newton steps are damped by step halving so the penalised
    log-likelihood never decreases beyond :func:`roundoff_slack`.  On a singular Hessian the ridge is
    raised tenfold, up to ``1e-2``.
    """
    Xd = _design(X)
    y = np.asarray(y, dtype=np.int64)
    M = int(n_categories if n_categories is not None else y.max())
    present = np.unique(y)
    if present.size < 2:
        raise ValidationError("at least two distinct categories are needed to fit a multinomial logit")
    if y.min() < 1 or y.max() > M:
        raise ValidationError("category codes must lie in 1..M")
    if Xd.shape[0] <= Xd.shape[1]:
        raise ValidationError(f"need more units ({Xd.shape[0]}) than parameters per category ({Xd.shape[1]})")
    Y = (y[:, None] == np.arange(1, M + 1)[None, :]).astype(float)
    lam = ridge
    while True:
        try:
            coef, n_iter, trace = _newton(Xd, Y, lam)
            break
        except SingularHessian:
            if lam >= MAX_RIDGE:
                raise
            lam = min(MAX_RIDGE, max(lam * 10, 1e-12) if lam > 0 else DEFAULT_RIDGE)
    coef.setflags(write=False)
    return ClassProbModel(coef, arm, lam, n_iter, tuple(trace))


def fit_logit(X, d, ridge: float = DEFAULT_RIDGE) -> PropensityModel:
    """Logistic regression of a binary ``d`` on ``X``."""
    d = np.asarray(d, dtype=np.int64)
    for arm in (0, 1):
        if not np.any(d == arm):
            raise EmptyArm(arm)
    # code 1 <-> d = 1, reference code 2 <-> d = 0
    model = fit_multinomial_logit(X, 2 - d, ridge=ridge, n_categories=2)
    return PropensityModel(np.array(model.coef[0]), model.n_iter)


@dataclass(frozen=True)
class FoldPlan:
    K: int
    assignment: np.ndarray
    seed: int
    attempts_used: int

    def train_mask(self, k: int) -> np.ndarray:
        return self.assignment != k


def _presence_ok(assignment, y, d, K, M) -> bool:
    # counts per (fold, arm, category)
    idx = (assignment * 2 + d) * M + (y - 1)
    counts = np.bincount(idx, minlength=K * 2 * M)
    return bool(np.all(counts > 0))


def make_folds(sample: QualSample, K: int = 5, seed: int = 0, max_attempts: int = 1000) -> FoldPlan:
    """Random balanced K-fold partition with every category in every fold and arm.

    Partitions are redrawn until the presence condition holds.  The result
    is a deterministic function of ``(sample, K, seed)``.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    y, d = sample.outcome, sample.treatment
    n, M = sample.n, sample.n_categories
    if n < 2 * K * M:
        raise GuaranteeUnsatisfiable(0, f"n={n} is below 2*K*M={2 * K * M}")
    counts = np.bincount(d * M + (y - 1), minlength=2 * M).reshape(2, M)
    if np.any(counts < K):
        arm, m = map(int, np.argwhere(counts < K)[0])
        raise GuaranteeUnsatisfiable(0, f"category {sample.labels[m]!r} has {counts[arm, m]} units in arm {arm}, fewer than K={K}")
    rng = np.random.default_rng(seed)
    base = np.arange(n) % K
    for attempt in range(1, max_attempts + 1):
        assignment = np.empty(n, dtype=np.int64)
        assignment[rng.permutation(n)] = base
        if _presence_ok(assignment, y, d, K, M):
            assignment.setflags(write=False)
            return FoldPlan(K, assignment, seed, attempt)
    raise GuaranteeUnsatisfiable(max_attempts)


@dataclass(frozen=True)
class NuisancePredictions:
    """Out-of-fold nuisance predictions for every unit.

    ``p1`` and ``p0`` are n x M class probabilities under treatment and
    control; ``e`` is the unclipped propensity score.
    """

    p1: np.ndarray
    p0: np.ndarray
    e: np.ndarray
    plan: FoldPlan | None = None


def cross_fit_nuisances(sample: QualSample, K: int = 5, seed: int = 0, ridge: float = DEFAULT_RIDGE, max_attempts: int = 1000) -> NuisancePredictions:
    """K-fold cross-fitted predictions of ``p_m(1, x)``, ``p_m(0, x)`` and ``e(x)``.

    For fold k, separate class-probability models are fit on treated and
    control units outside the fold, and the propensity model on all units
    outside the fold.
    """
    plan = make_folds(sample, K, seed, max_attempts)
    X, y, d = sample.covariates, sample.outcome, sample.treatment
    M = sample.n_categories
    n = sample.n
    p1 = np.empty((n, M))
    p0 = np.empty((n, M))
    e = np.empty(n)
    for k in range(K):
        test = plan.assignment == k
        train = ~test
        try:
            for arm, out in ((1, p1), (0, p0)):
                sel = train & (d == arm)
                model = fit_multinomial_logit(X[sel], y[sel], ridge, n_categories=M, arm=arm)
                out[test] = model.predict_proba(X[test])
            e[test] = fit_logit(X[train], d[train], ridge).predict(X[test])
        except EstimationError as exc:
            raise FoldFitError(k, exc) from exc
    for a in (p1, p0, e):
        a.setflags(write=False)
    return NuisancePredictions(p1, p0, e, plan)
