"""Command-line front end.

``qualshift estimate`` reads a CSV sample and writes a JSON estimate;
``qualshift simulate`` runs a Monte Carlo study and writes a CSV report
plus a readable table.

Exit codes: 0 success, 2 invalid input or flags, 3 estimation failure (or
more than 1% failed replications).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

from .core import EstimationError, QualError, ValidationError, read_csv, write_csv
from .dgp import DgpSpec, EstimatorConfig, estimate, gen_sample, run_monte_carlo

EXIT_OK, EXIT_INVALID, EXIT_ESTIMATION = 0, 2, 3
MAX_FAILURE_RATE = 0.01


@dataclass(frozen=True)
class CliConfig:
    subcommand: str
    design: str
    input: str | None = None
    output: str | None = None
    K: int = 5
    seed: int = 0
    alpha: float = 0.05
    cutoff: float | None = None
    bandwidth: object = "auto"
    bias_correction: bool = True
    period_col: str = "period"
    unit_col: str = "unit_id"
    estimand: str | None = None
    reps: int = 500
    n: int = 2000
    outcome_kind: str = "multinomial"
    assignment: str = "random"
    jobs: int = 1
    dump: str | None = None

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(
            K=self.K,
            alpha=self.alpha,
            bandwidth=self.bandwidth,
            bias_correction=self.bias_correction,
            estimand=self.estimand,
        )


def _bandwidth(text: str):
    if text == "auto":
        return "auto"
    try:
        h = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be 'auto' or a positive number, got {text!r}") from None
    if not h > 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return h


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qualshift", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--design", choices=["soo", "iv", "rd", "did"], required=True)
        p.add_argument("--output", help="output path (default: stdout)")
        p.add_argument("--k", dest="K", type=int, default=5, help="cross-fitting folds (soo)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--bandwidth", type=_bandwidth, default="auto", help="'auto' or a fixed value (rd)")
        p.add_argument("--no-bias-correction", dest="bias_correction", action="store_false")

    est = sub.add_parser("estimate", help="estimate probability shifts from a CSV file")
    common(est)
    est.add_argument("--input", required=True)
    est.add_argument("--cutoff", type=float, help="RD cutoff (required for --design rd)")
    est.add_argument("--period-col", default="period")
    est.add_argument("--unit-col", default="unit_id")
    est.add_argument("--estimand", choices=["PS", "PST"], help="soo target (default PS)")

    sim = sub.add_parser("simulate", help="Monte Carlo study on a simulated design")
    common(sim)
    sim.add_argument("--outcome", dest="outcome_kind", choices=["multinomial", "ordered"], default="multinomial")
    sim.add_argument("--assignment", choices=["random", "observational"], default="random",
                     help="treatment assignment of the soo design")
    sim.add_argument("--reps", type=int, default=500)
    sim.add_argument("--n", type=int, default=2000)
    sim.add_argument("--jobs", type=int, default=1, help="worker processes")
    sim.add_argument("--dump", help="write one simulated sample to this CSV path and exit")
    return parser


def parse_config(argv=None) -> CliConfig:
    ns = build_parser().parse_args(argv)
    return CliConfig(**{k: v for k, v in vars(ns).items() if k in CliConfig.__dataclass_fields__})


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _error(msg: str) -> None:
    print(f"qualshift: error: {msg}", file=sys.stderr)


def cmd_estimate(cfg: CliConfig) -> int:
    if cfg.design == "rd" and cfg.cutoff is None:
        _error("--design rd requires --cutoff")
        return EXIT_INVALID
    try:
        sample = read_csv(cfg.input, cutoff=cfg.cutoff, period_col=cfg.period_col, unit_col=cfg.unit_col)
    except OSError as exc:
        _error(f"cannot read {cfg.input}: {exc.strerror or exc}")
        return EXIT_INVALID
    except ValidationError as exc:
        _error(str(exc))
        return EXIT_INVALID
    try:
        result = estimate(sample, cfg.design, cfg.estimator_config(), cfg.seed)
    except ValidationError as exc:
        _error(f"{cfg.input}: {exc}")
        return EXIT_INVALID
    except EstimationError as exc:
        _error(f"{cfg.input}: {exc}")
        return EXIT_ESTIMATION
    _emit(json.dumps(result.to_dict(), indent=2) + "\n", cfg.output)
    return EXIT_OK


def _dgp_design(cfg: CliConfig) -> str:
    if cfg.design == "soo":
        return "soo-random" if cfg.assignment == "random" else "soo-obs"
    return cfg.design


def cmd_simulate(cfg: CliConfig) -> int:
    try:
        spec = DgpSpec(_dgp_design(cfg), cfg.outcome_kind, cfg.n, cfg.seed)
    except ValueError as exc:
        _error(str(exc))
        return EXIT_INVALID
    if cfg.dump is not None:
        write_csv(gen_sample(spec), cfg.dump)
        return EXIT_OK
    if cfg.reps < 1:
        _error("--reps must be at least 1")
        return EXIT_INVALID
    try:
        report = run_monte_carlo(spec, cfg.estimator_config(), cfg.reps, n_jobs=cfg.jobs)
    except QualError as exc:
        _error(str(exc))
        return EXIT_ESTIMATION
    _emit(report.to_csv(), cfg.output)
    print(report.table(), file=sys.stderr if cfg.output is None else sys.stdout)
    if report.failure_rate > MAX_FAILURE_RATE:
        _error(f"{report.n_failed} of {report.R} replications failed; first: {report.failures[0]}")
        return EXIT_ESTIMATION
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if cfg.subcommand == "estimate":
        return cmd_estimate(cfg)
    return cmd_simulate(cfg)


if __name__ == "__main__":
    sys.exit(main())
