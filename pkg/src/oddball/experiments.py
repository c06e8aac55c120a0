"""Monte Carlo verification harness.

Two studies:

* `run_experiment` — repeated trials of the sequential policy over a grid
  of reliability levels L, aggregated into one CSV row per level (error
  counts with a one-sided 95% upper confidence bound, mean stopping time
  with its standard error, the tau/ln L ratio, and the information lower
  bound for comparison).
* `drift_experiment` — long non-stopping runs that audit the law of large
  numbers the policy relies on: Z_true / n must approach the optimal
  exponent D*, the empirical sampling frequencies must approach lambda*,
  and the pooled hold-out estimates under wrong hypotheses must approach
  the mixed rate.

Reproducibility contract: trial (l_index, trial_index) always draws from
`numpy.random.default_rng([seed, l_index, trial_index])`, and rows are
aggregated in grid-then-trial order, so the emitted CSV is byte-identical
for any worker count.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import os
from dataclasses import dataclass, fields

import numpy as np
from scipy.stats import beta as _beta

from .glr import SufficientStats
from .numerics import DomainError
from .policy import PolicyConfig, TrialOutcome, run_trial
from .solver import OddConfig, d_star, lower_bound_expected_tau, solve_lambda_star

__all__ = [
    "ExperimentSpec",
    "ReportRow",
    "ExperimentReport",
    "DriftRow",
    "DriftResult",
    "default_checkpoints",
    "sample_poisson",
    "run_experiment",
    "drift_experiment",
    "error_upper_confidence",
]

REPORT_HEADER = (
    "L,threshold,trials,errors,error_rate,error_ci_hi,"
    "mean_tau,se_tau,tau_over_lnL,lower_bound,inv_dstar,capped"
)


def sample_poisson(rate: float, rng) -> int:
    """One Poisson draw with a validated rate."""
    if not (rate > 0.0 and math.isfinite(rate)):
        raise DomainError(f"rate must be positive and finite, got {rate!r}")
    return int(rng.poisson(rate))


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one policy experiment.

    l_grid must be strictly increasing with every entry >= 1. r1 and r2
    are scalar rates (the harness simulates scalar configurations).
    trace_sampling in [0, 1] is the fraction of trials per level whose
    full traces are written out (requires a trace directory at run time).
    """

    k: int
    odd_index: int
    r1: float
    r2: float
    l_grid: tuple[float, ...]
    trials: int
    seed: int
    max_slots: int = 10_000_000
    trace_sampling: float = 0.0

    def __post_init__(self):
        # Delegate k / odd_index / rate validation to the config type.
        OddConfig(self.k, self.odd_index, self.r1, self.r2)
        if not isinstance(self.trials, int) or self.trials < 1:
            raise DomainError(f"trials must be a positive integer, got {self.trials!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise DomainError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not isinstance(self.max_slots, int) or self.max_slots < 1:
            raise DomainError(f"max_slots must be a positive integer, got {self.max_slots!r}")
        grid = tuple(float(l) for l in self.l_grid)
        if not grid:
            raise DomainError("l_grid must be non-empty")
        if any(not (l >= 1.0 and math.isfinite(l)) for l in grid):
            raise DomainError("every l_grid entry must be finite and >= 1")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise DomainError("l_grid must be strictly increasing")
        object.__setattr__(self, "l_grid", grid)
        if not (0.0 <= self.trace_sampling <= 1.0):
            raise DomainError(f"trace_sampling must lie in [0, 1], got {self.trace_sampling!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        if not isinstance(data, dict):
            raise DomainError("experiment spec must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise DomainError(f"unknown spec keys: {', '.join(unknown)}")
        missing = sorted(known - set(data) - {"max_slots", "trace_sampling"})
        if missing:
            raise DomainError(f"missing spec keys: {', '.join(missing)}")
        kwargs = dict(data)
        for key in ("r1", "r2"):
            v = kwargs[key]
            # Accept a length-one list for rates: the scalar case of the
            # vector-rate configuration format.
            if isinstance(v, list):
                if len(v) != 1:
                    raise DomainError(f"{key} must be a scalar or a length-1 list")
                v = v[0]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise DomainError(f"{key} must be a number")
            kwargs[key] = float(v)
        grid = kwargs["l_grid"]
        if not isinstance(grid, list):
            raise DomainError("l_grid must be a list of numbers")
        for l in grid:
            if isinstance(l, bool) or not isinstance(l, (int, float)):
                raise DomainError("l_grid must be a list of numbers")
        kwargs["l_grid"] = tuple(float(l) for l in grid)
        for key in ("k", "odd_index", "trials", "seed", "max_slots"):
            if key in kwargs:
                v = kwargs[key]
                if isinstance(v, bool) or not isinstance(v, int):
                    raise DomainError(f"{key} must be an integer")
        if "trace_sampling" in kwargs:
            v = kwargs["trace_sampling"]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise DomainError("trace_sampling must be a number")
            kwargs["trace_sampling"] = float(v)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        return cls.from_dict(json.loads(text))

    def truth(self) -> OddConfig:
        return OddConfig(self.k, self.odd_index, self.r1, self.r2)


@dataclass(frozen=True)
class ReportRow:
    """Aggregate over all trials at one reliability level."""

    l_value: float
    threshold: float
    trials: int
    errors: int
    error_rate: float
    error_ci_hi: float
    mean_tau: float
    se_tau: float
    tau_over_ln_l: float
    lower_bound: float
    inv_dstar: float
    capped: int

    def to_csv_line(self) -> str:
        return (
            f"{self.l_value:.12g},{self.threshold:.12g},{self.trials},{self.errors},"
            f"{self.error_rate:.12g},{self.error_ci_hi:.12g},{self.mean_tau:.12g},"
            f"{self.se_tau:.12g},{self.tau_over_ln_l:.12g},{self.lower_bound:.12g},"
            f"{self.inv_dstar:.12g},{self.capped}"
        )


@dataclass(frozen=True)
class ExperimentReport:
    spec: ExperimentSpec
    rows: tuple[ReportRow, ...]

    def to_csv(self) -> str:
        return "\n".join([REPORT_HEADER, *(row.to_csv_line() for row in self.rows)]) + "\n"


def error_upper_confidence(errors: int, trials: int, level: float = 0.95) -> float:
    """One-sided upper confidence bound for a binomial proportion
    (Clopper-Pearson): the largest p not rejected at the given level."""
    if not isinstance(errors, int) or not isinstance(trials, int):
        raise DomainError("errors and trials must be integers")
    if trials < 1 or not 0 <= errors <= trials:
        raise DomainError(f"need 0 <= errors <= trials, got {errors}/{trials}")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level!r}")
    if errors == trials:
        return 1.0
    return float(_beta.ppf(level, errors + 1, trials - errors))


def _trial_rng(seed: int, l_index: int, trial_index: int):
    # Spawn-key derivation: disjoint child streams for every
    # (seed, level, trial) triple.
    return np.random.default_rng([seed, l_index, trial_index])


def _run_trial_job(args) -> TrialOutcome:
    (k, odd_index, r1, r2, l_value, max_slots, seed, l_index, trial_index, collect) = args
    config = PolicyConfig(k=k, threshold_l=l_value, max_slots=max_slots)
    truth = OddConfig(k, odd_index, r1, r2)
    rng = _trial_rng(seed, l_index, trial_index)
    return run_trial(config, truth, rng, collect_trace=collect)


def _trace_lines(outcome: TrialOutcome) -> str:
    return "\n".join(json.dumps(rec, separators=(",", ":")) for rec in outcome.trace) + "\n"


def _aggregate(
    spec: ExperimentSpec,
    l_value: float,
    outcomes: list[TrialOutcome],
    bound: float,
    inv_dstar: float,
) -> ReportRow:
    trials = len(outcomes)
    errors = sum(1 for o in outcomes if not o.correct)
    capped = sum(1 for o in outcomes if o.capped)
    taus = [o.tau for o in outcomes if not o.capped]
    if taus:
        mean_tau = sum(taus) / len(taus)
        if len(taus) > 1:
            var = sum((t - mean_tau) ** 2 for t in taus) / (len(taus) - 1)
            se_tau = math.sqrt(var / len(taus))
        else:
            se_tau = 0.0
    else:
        mean_tau = math.nan
        se_tau = math.nan
    log_l = math.log(l_value)
    ratio = mean_tau / log_l if log_l > 0.0 else math.nan
    return ReportRow(
        l_value=l_value,
        threshold=math.log((spec.k - 1) * l_value),
        trials=trials,
        errors=errors,
        error_rate=errors / trials,
        error_ci_hi=error_upper_confidence(errors, trials),
        mean_tau=mean_tau,
        se_tau=se_tau,
        tau_over_ln_l=ratio,
        lower_bound=bound,
        inv_dstar=inv_dstar,
        capped=capped,
    )


def run_experiment(
    spec: ExperimentSpec,
    parallelism: int = 1,
    trace_dir: str | None = None,
) -> ExperimentReport:
    """Run the full grid of the spec and aggregate one row per level.

    parallelism > 1 distributes trials over a process pool; results are
    consumed in submission order so the report does not depend on worker
    scheduling. Sampled traces (the first ceil(trace_sampling * trials)
    trials of each level) are written to trace_dir as
    trace_L<level>_i<trial>.jsonl.
    """
    if not isinstance(parallelism, int) or parallelism < 1:
        raise DomainError(f"parallelism must be a positive integer, got {parallelism!r}")
    n_traced = math.ceil(spec.trace_sampling * spec.trials)
    if n_traced > 0 and trace_dir is None:
        raise DomainError("trace_sampling > 0 requires a trace directory")

    truth = spec.truth()
    dstar = d_star(truth)
    inv_dstar = 1.0 / dstar if dstar > 0.0 else math.inf

    jobs = []
    for li, l_value in enumerate(spec.l_grid):
        for ti in range(spec.trials):
            jobs.append(
                (
                    spec.k,
                    spec.odd_index,
                    spec.r1,
                    spec.r2,
                    l_value,
                    spec.max_slots,
                    spec.seed,
                    li,
                    ti,
                    ti < n_traced,
                )
            )
    if parallelism == 1:
        outcomes = [_run_trial_job(job) for job in jobs]
    else:
        chunk = max(1, len(jobs) // (parallelism * 8))
        with multiprocessing.Pool(processes=parallelism) as pool:
            outcomes = pool.map(_run_trial_job, jobs, chunksize=chunk)

    rows = []
    for li, l_value in enumerate(spec.l_grid):
        batch = outcomes[li * spec.trials : (li + 1) * spec.trials]
        if trace_dir is not None:
            for ti in range(n_traced):
                path = os.path.join(trace_dir, f"trace_L{l_value:g}_i{ti}.jsonl")
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(_trace_lines(batch[ti]))
        alpha = 1.0 / l_value
        bound = lower_bound_expected_tau(truth, alpha) if 0.0 < alpha < 1.0 else math.nan
        rows.append(_aggregate(spec, l_value, batch, bound, inv_dstar))
    return ExperimentReport(spec=spec, rows=tuple(rows))


@dataclass(frozen=True)
class DriftRow:
    """State audit of one non-stopping run at one checkpoint slot n."""

    seed: int
    n: int
    leader: int
    z_leader_over_n: float
    z_true_over_n: float
    frequencies: tuple[float, ...]
    empirical_rates: tuple[float, ...]
    holdout_rates: tuple[float, ...]
    visits: tuple[int, ...]
    events: tuple[int, ...]
    total: int


@dataclass(frozen=True)
class DriftResult:
    """Per-(seed, checkpoint) rows plus the truth quantities they are
    audited against: D*, lambda*, the true rates, and the mixed rate."""

    truth: OddConfig
    n_slots: int
    d_star: float
    lambda_star: tuple[float, ...]
    mixed_rate: float
    rows: tuple[DriftRow, ...]

    def final_rows(self) -> tuple[DriftRow, ...]:
        return tuple(r for r in self.rows if r.n == self.n_slots)

    def summary(self) -> dict:
        """Median/extreme deviations across seeds at the final slot."""
        odd = self.truth.odd_index
        rows = self.final_rows()
        z_errs = sorted(abs(r.z_true_over_n - self.d_star) / self.d_star for r in rows)
        freq_errs = sorted(
            max(abs(f - l) for f, l in zip(r.frequencies, self.lambda_star)) for r in rows
        )
        holdout_errs = sorted(
            max(
                abs(h - self.mixed_rate) / self.mixed_rate
                for j, h in enumerate(r.holdout_rates, start=1)
                if j != odd
            )
            for r in rows
        )
        n = len(rows)
        mid = n // 2

        def med(xs):
            return xs[mid] if n % 2 == 1 else 0.5 * (xs[mid - 1] + xs[mid])

        return {
            "seeds": n,
            "n_slots": self.n_slots,
            "d_star": self.d_star,
            "leader_correct_fraction": sum(1 for r in rows if r.leader == odd) / n,
            "median_z_rel_err": med(z_errs),
            "max_z_rel_err": z_errs[-1],
            "median_freq_err_inf": med(freq_errs),
            "max_freq_err_inf": freq_errs[-1],
            "median_holdout_rel_err": med(holdout_errs),
            "max_holdout_rel_err": holdout_errs[-1],
        }

    def to_csv(self) -> str:
        k = self.truth.k
        header = (
            ["seed", "n", "leader", "z_true_over_n", "z_leader_over_n"]
            + [f"freq_{j}" for j in range(1, k + 1)]
            + [f"rate_{j}" for j in range(1, k + 1)]
            + [f"holdout_{j}" for j in range(1, k + 1)]
            + ["total"]
        )
        lines = [",".join(header)]
        for r in self.rows:
            cells = [str(r.seed), str(r.n), str(r.leader)]
            cells.append(f"{r.z_true_over_n:.12g}")
            cells.append(f"{r.z_leader_over_n:.12g}")
            cells.extend(f"{v:.12g}" for v in r.frequencies)
            cells.extend(f"{v:.12g}" for v in r.empirical_rates)
            cells.extend(f"{v:.12g}" for v in r.holdout_rates)
            cells.append(str(r.total))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def default_checkpoints(n_slots: int) -> tuple[int, ...]:
    """Audit slots for a drift run: roughly n/10, n/4, n/2, and n."""
    marks = {n_slots}
    for frac in (10, 4, 2):
        marks.add(max(1, n_slots // frac))
    return tuple(sorted(marks))


def _snapshot_row(snap, seed: int, odd_index: int, k: int) -> DriftRow:
    stats = SufficientStats.from_counts(list(snap.visits), list(snap.events))
    holdout = tuple(stats.theta_hat(j)[1] for j in range(1, k + 1))
    return DriftRow(
        seed=seed,
        n=snap.n,
        leader=snap.leader,
        z_leader_over_n=snap.z_min[snap.leader - 1] / snap.n,
        z_true_over_n=snap.z_min[odd_index - 1] / snap.n,
        frequencies=tuple(v / snap.n for v in snap.visits),
        empirical_rates=tuple(
            e / v if v > 0 else 0.0 for e, v in zip(snap.events, snap.visits)
        ),
        holdout_rates=holdout,
        visits=snap.visits,
        events=snap.events,
        total=snap.total,
    )


def _drift_job(args) -> list[DriftRow]:
    (k, odd_index, r1, r2, n_slots, seed, checkpoints) = args
    config = PolicyConfig(k=k, threshold_l=1.0, variant="non_stopping", max_slots=n_slots)
    truth = OddConfig(k, odd_index, r1, r2)
    rng = np.random.default_rng(seed)
    out = run_trial(config, truth, rng, checkpoints=checkpoints)
    return [_snapshot_row(snap, seed, odd_index, k) for snap in out.snapshots]


def drift_experiment(
    truth: OddConfig,
    n_slots: int,
    seeds,
    checkpoints=None,
    parallelism: int = 1,
) -> DriftResult:
    """Run the non-stopping policy for n_slots under each seed and audit
    the empirical drift, sampling frequencies, per-process rate
    estimates, and hold-out estimates at each checkpoint."""
    if truth.dim != 1:
        raise DomainError("drift studies support scalar-rate configurations only")
    if truth.is_degenerate:
        raise DomainError("drift studies need distinct rates")
    if not isinstance(n_slots, int) or n_slots < 1:
        raise DomainError(f"n_slots must be a positive integer, got {n_slots!r}")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise DomainError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise DomainError("seeds must be distinct")
    if not isinstance(parallelism, int) or parallelism < 1:
        raise DomainError(f"parallelism must be a positive integer, got {parallelism!r}")
    if checkpoints is None:
        cps = default_checkpoints(n_slots)
    else:
        cps = tuple(sorted({int(c) for c in checkpoints}))
        if not cps or cps[0] < 1 or cps[-1] > n_slots:
            raise DomainError("checkpoints must be nonempty and lie in 1..n_slots")
        if n_slots not in cps:
            cps = cps + (n_slots,)

    sol = solve_lambda_star(truth)
    jobs = [
        (truth.k, truth.odd_index, truth.r1[0], truth.r2[0], n_slots, seed, cps)
        for seed in seeds
    ]
    if parallelism == 1:
        batches = [_drift_job(job) for job in jobs]
    else:
        with multiprocessing.Pool(processes=parallelism) as pool:
            batches = pool.map(_drift_job, jobs)
    rows = [row for batch in batches for row in batch]
    return DriftResult(
        truth=truth,
        n_slots=n_slots,
        d_star=sol.d_star,
        lambda_star=sol.lam,
        mixed_rate=sol.r_tilde[0],
        rows=tuple(rows),
    )
