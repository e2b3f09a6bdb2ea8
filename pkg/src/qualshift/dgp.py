"""Simulation designs, ground-truth oracles and the Monte Carlo runner.

Three covariates are drawn from U[0, 1].  Multinomial potential outcomes
follow a softmax in ``X @ BETA[d]`` (rows of ``BETA[d]`` index covariates,
columns index categories, no intercept); ordered potential outcomes
discretise ``tau * d + sum(X) + N(0, 1)`` at thresholds 2 and 3, with one
shared noise draw for both arms.

Every replication of :func:`run_monte_carlo` draws from its own stream
``SeedSequence([seed, r])`` so reports do not depend on scheduling.
"""

from __future__ import annotations

import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .core import QualError, QualSample, ShiftEstimate

__all__ = [
    "DGP_DESIGNS",
    "OUTCOME_KINDS",
    "BETA1",
    "BETA0",
    "THRESHOLDS",
    "TAU",
    "DgpSpec",
    "EstimatorConfig",
    "Truth",
    "MonteCarloReport",
    "class_probabilities",
    "propensity",
    "gen_potential_outcomes",
    "gen_sample",
    "true_shift",
    "estimate",
    "run_monte_carlo",
]

DGP_DESIGNS = ("soo-random", "soo-obs", "iv", "rd", "did")
OUTCOME_KINDS = ("multinomial", "ordered")

BETA1 = np.array([
    [0.5, 0.3, -0.2],
    [-0.2, 0.4, 0.1],
    [0.1, -0.3, 0.5],
])
BETA0 = np.array([
    [0.7, 0.7, -0.2],
    [-0.2, 0.4, 0.1],
    [-0.2, -0.5, 0.1],
])
BETA1.setflags(write=False)
BETA0.setflags(write=False)
THRESHOLDS = (2.0, 3.0)
TAU = 2.0
RD_CUTOFF = 0.5
ORACLE_SEED = 20240601
ORACLE_DRAWS = 1_000_000

_DEFAULT_ESTIMAND = {"soo-random": "PS", "soo-obs": "PS", "iv": "LPS", "rd": "PSC", "did": "PST"}


@dataclass(frozen=True)
class DgpSpec:
    design: str = "soo-random"
    outcome_kind: str = "multinomial"
    n: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.design not in DGP_DESIGNS:
            raise ValueError(f"design must be one of {DGP_DESIGNS}")
        if self.outcome_kind not in OUTCOME_KINDS:
            raise ValueError(f"outcome_kind must be one of {OUTCOME_KINDS}")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def n_categories(self) -> int:
        return 3

    @property
    def estimator_design(self) -> str:
        return "soo" if self.design.startswith("soo") else self.design

    @property
    def estimand(self) -> str:
        return _DEFAULT_ESTIMAND[self.design]


def class_probabilities(outcome_kind: str, X: np.ndarray, d: int) -> np.ndarray:
    """Exact ``P(Y(d) = m | X)``, shape (n, 3)."""
    X = np.atleast_2d(X)
    if outcome_kind == "multinomial":
        eta = X @ (BETA1 if d == 1 else BETA0)
        eta = eta - eta.max(axis=1, keepdims=True)
        p = np.exp(eta)
        return p / p.sum(axis=1, keepdims=True)
    loc = TAU * d + X.sum(axis=1)
    c1 = ndtr(THRESHOLDS[0] - loc)
    c2 = ndtr(THRESHOLDS[1] - loc)
    return np.column_stack([c1, c2 - c1, 1.0 - c2])


def propensity(design: str, X: np.ndarray, z=None) -> np.ndarray:
    """Treatment probability of each design (for IV, given instrument ``z``)."""
    X = np.atleast_2d(X)
    if design == "soo-random":
        return np.full(X.shape[0], 0.5)
    if design in ("soo-obs", "did"):
        return (X[:, 0] + X[:, 2]) / 2.0
    if design == "iv":
        return (X[:, 0] + X[:, 1] + np.asarray(z, dtype=float)) / 3.0
    if design == "rd":
        return (X[:, 0] >= RD_CUTOFF).astype(float)
    raise ValueError(design)


def _discretise(ystar: np.ndarray) -> np.ndarray:
    # category m iff zeta_{m-1} < Y* <= zeta_m
    return np.searchsorted(np.asarray(THRESHOLDS), ystar, side="left") + 1


def _categorical(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(p, axis=1)
    return 1 + np.sum(u[:, None] > cum[:, :-1], axis=1)


def gen_potential_outcomes(spec: DgpSpec, x, rng: np.random.Generator, noise=None):
    """Draw ``(Y(1), Y(0))`` for each covariate row of ``x``.

    For ordered outcomes ``noise`` may fix the standard normal draw shared
    by both arms.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    if spec.outcome_kind == "ordered":
        eps = rng.standard_normal(n) if noise is None else np.broadcast_to(np.asarray(noise, dtype=float), (n,))
        base = x.sum(axis=1) + eps
        return _discretise(base + TAU), _discretise(base)
    p1 = class_probabilities("multinomial", x, 1)
    p0 = class_probabilities("multinomial", x, 0)
    return _categorical(p1, rng.uniform(size=n)), _categorical(p0, rng.uniform(size=n))


def gen_sample(spec: DgpSpec, rng: np.random.Generator | None = None) -> QualSample:
    """One simulated data set of ``spec.n`` units (``2 n`` rows for DiD)."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n = spec.n
    X = rng.uniform(size=(n, 3))
    labels = (1, 2, 3)
    if spec.design == "did":
        d = (rng.uniform(size=n) <= propensity("did", X)).astype(np.int64)
        _, y_pre = gen_potential_outcomes(spec, X, rng)
        y1, y0 = gen_potential_outcomes(spec, X, rng)
        y_post = np.where(d == 1, y1, y0)
        return QualSample(
            np.concatenate([y_pre, y_post]),
            np.concatenate([d, d]),
            np.vstack([X, X]),
            labels=labels,
            period=np.repeat([0, 1], n),
            unit_id=np.tile(np.arange(n), 2),
        )
    y1, y0 = gen_potential_outcomes(spec, X, rng)
    kwargs = {}
    if spec.design == "iv":
        z = (rng.uniform(size=n) < 0.5).astype(np.int64)
        u = rng.uniform(size=n)
        # shared uniform: D(z) = 1{U <= e(X, z)} is monotone in z
        d = (u <= propensity("iv", X, z)).astype(np.int64)
        kwargs["instrument"] = z
    elif spec.design == "rd":
        d = (X[:, 0] >= RD_CUTOFF).astype(np.int64)
        kwargs["running_var"] = X[:, 0]
        kwargs["cutoff"] = RD_CUTOFF
    else:
        d = (rng.uniform(size=n) < propensity(spec.design, X)).astype(np.int64)
    y = np.where(d == 1, y1, y0)
    return QualSample(y, d, X, labels=labels, **kwargs)


@dataclass(frozen=True)
class Truth:
    estimand: str
    values: np.ndarray
    mc_se: np.ndarray
    draws: int


@lru_cache(maxsize=32)
def _truth(design: str, outcome_kind: str, estimand: str, draws: int, seed: int) -> Truth:
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(draws, 3))
    if estimand == "PSC":
        X[:, 0] = RD_CUTOFF
        keep = np.ones(draws, dtype=bool)
    elif estimand == "LPS":
        u = rng.uniform(size=draws)
        keep = (propensity("iv", X, 0) < u) & (u <= propensity("iv", X, 1))
    elif estimand == "PST":
        assign = "soo-obs" if design == "did" else design
        keep = rng.uniform(size=draws) < propensity(assign, X)
    else:
        keep = np.ones(draws, dtype=bool)
    Xk = X[keep]
    contrib = class_probabilities(outcome_kind, Xk, 1) - class_probabilities(outcome_kind, Xk, 0)
    k = contrib.shape[0]
    values = np.array([math.fsum(contrib[:, m]) / k for m in range(contrib.shape[1])])
    mc_se = contrib.std(axis=0, ddof=1) / np.sqrt(k)
    values.setflags(write=False)
    mc_se.setflags(write=False)
    return Truth(estimand, values, mc_se, k)


def true_shift(spec: DgpSpec, estimand: str | None = None, draws: int = ORACLE_DRAWS, seed: int = ORACLE_SEED) -> Truth:
    """Brute-force Monte Carlo value of the design's estimand.

    Covariates (and, where relevant, treatment or compliance draws) are
    simulated ``draws`` times and the exact conditional shift
    ``P(Y(1)=m|X) - P(Y(0)=m|X)`` is averaged over the relevant
    subpopulation: everyone (PS), treated units (PST), compliers
    ``e(X,0) < U <= e(X,1)`` (LPS) or ``X1 = 0.5`` (PSC).  The result does
    not depend on ``spec.seed``.
    """
    estimand = estimand or spec.estimand
    if draws < 1:
        raise ValueError("draws must be positive")
    return _truth(spec.design, spec.outcome_kind, estimand, int(draws), int(seed))


@dataclass(frozen=True)
class EstimatorConfig:
    K: int = 5
    alpha: float = 0.05
    bandwidth: object = "auto"
    bias_correction: bool = True
    estimand: str | None = None
    pst_method: str = "dr"
    iv_se: str = "hc0"


def estimate(sample: QualSample, design: str, config: EstimatorConfig = EstimatorConfig(), seed: int = 0) -> ShiftEstimate:
    """Run the default estimator of ``design`` (soo, iv, rd or did)."""
    from .did import estimate_pst_did
    from .iv import estimate_lps
    from .rd import estimate_psc
    from .soo import estimate_ps, estimate_pst

    if design == "soo":
        if config.estimand == "PST":
            return estimate_pst(sample, config.K, seed, config.alpha, method=config.pst_method)
        return estimate_ps(sample, config.K, seed, config.alpha)
    if design == "iv":
        return estimate_lps(sample, config.alpha, config.iv_se)
    if design == "rd":
        return estimate_psc(sample, config.bandwidth, config.bias_correction, config.alpha)
    if design == "did":
        return estimate_pst_did(sample, config.alpha)
    raise ValueError(f"unknown design {design!r}")


def _replication(args):
    spec, config, r = args
    ss = np.random.SeedSequence([spec.seed, r])
    data_ss, fold_ss = ss.spawn(2)
    rng = np.random.default_rng(data_ss)
    fold_seed = int(fold_ss.generate_state(1)[0])
    try:
        sample = gen_sample(spec, rng)
        est = estimate(sample, spec.estimator_design, config, fold_seed)
    except (QualError, np.linalg.LinAlgError) as exc:
        return r, None, f"{type(exc).__name__}: {exc}"
    return r, np.column_stack([est.points, est.ses, est.ci]), None


@dataclass(frozen=True)
class MonteCarloReport:
    design: str
    outcome_kind: str
    estimand: str
    n: int
    R: int
    seed: int
    truth: np.ndarray
    truth_se: np.ndarray
    mean_estimate: np.ndarray
    abs_bias: np.ndarray
    sd: np.ndarray
    coverage: np.ndarray
    mean_se: np.ndarray
    n_failed: int = 0
    failures: tuple = ()
    runtime: float = field(default=0.0, compare=False)
    estimates: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def failure_rate(self) -> float:
        return self.n_failed / self.R

    def to_csv(self) -> str:
        """Report as CSV text with one row per category."""
        buf = io.StringIO()
        buf.write("design,outcome_kind,class,truth,abs_bias,sd,coverage\n")
        for m in range(self.truth.size):
            buf.write(
                f"{self.design},{self.outcome_kind},{m + 1},{self.truth[m]:.6f},"
                f"{self.abs_bias[m]:.6f},{self.sd[m]:.6f},{self.coverage[m]:.6f}\n"
            )
        return buf.getvalue()

    def table(self) -> str:
        """Human-readable table: truth, |bias|, SD and coverage per class."""
        head = f"{self.design} / {self.outcome_kind}: {self.estimand}, n={self.n}, R={self.R}"
        lines = [head, f"{'':8s} {self.estimand:>7s} {'|Bias|':>7s} {'SD':>6s} {'95%':>6s}"]
        for m in range(self.truth.size):
            lines.append(
                f"Class {m + 1:<2d} {self.truth[m]:7.2f} {self.abs_bias[m]:7.3f} "
                f"{self.sd[m]:6.3f} {self.coverage[m]:6.3f}"
            )
        if self.n_failed:
            lines.append(f"failed replications: {self.n_failed}")
        return "\n".join(lines)


def _fsum_mean(a: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(a[:, j]) / a.shape[0] for j in range(a.shape[1])])


def run_monte_carlo(
    spec: DgpSpec,
    config: EstimatorConfig = EstimatorConfig(),
    R: int = 500,
    n_jobs: int = 1,
    truth: Truth | None = None,
) -> MonteCarloReport:
    """Simulate ``R`` data sets from ``spec`` and summarise the estimator.

    Reports absolute bias of the mean estimate, standard deviation of the
    estimates (0 when only one replication succeeds) and coverage of the
    confidence intervals.  Failed replications are counted and excluded.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    start = time.perf_counter()
    if truth is None:
        truth = true_shift(spec, config.estimand)
    jobs = [(spec, config, r) for r in range(R)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_replication, jobs, chunksize=max(1, R // (4 * n_jobs))))
    else:
        results = [_replication(j) for j in jobs]
    results.sort(key=lambda t: t[0])
    ok = [res for _, res, _ in results if res is not None]
    failures = tuple(f"rep {r}: {msg}" for r, res, msg in results if res is None)
    M = truth.values.size
    if ok:
        est = np.stack(ok)  # R_ok x M x 4 (point, se, lo, hi)
        points = est[:, :, 0]
        mean = _fsum_mean(points)
        if points.shape[0] > 1:
            dev = points - mean[None, :]
            sd = np.sqrt(_fsum_mean(dev ** 2) * points.shape[0] / (points.shape[0] - 1))
        else:
            sd = np.zeros(M)
        covered = (est[:, :, 2] <= truth.values[None, :]) & (truth.values[None, :] <= est[:, :, 3])
        coverage = covered.mean(axis=0)
        mean_se = _fsum_mean(est[:, :, 1])
    else:
        est = np.empty((0, M, 4))
        mean = sd = coverage = mean_se = np.full(M, np.nan)
    return MonteCarloReport(
        design=spec.design,
        outcome_kind=spec.outcome_kind,
        estimand=truth.estimand,
        n=spec.n,
        R=R,
        seed=spec.seed,
        truth=np.array(truth.values),
        truth_se=np.array(truth.mc_se),
        mean_estimate=mean,
        abs_bias=np.abs(mean - truth.values),
        sd=sd,
        coverage=coverage,
        mean_se=mean_se,
        n_failed=len(failures),
        failures=failures,
        runtime=time.perf_counter() - start,
        estimates=est,
    )
