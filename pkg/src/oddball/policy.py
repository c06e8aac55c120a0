"""Sequential policy: sample where the evidence says to, stop when it is strong.

At the end of every slot the policy computes the per-hypothesis scores
Z_i (see `oddball.glr`), names the current leader i* = argmax Z_i, and

* stops and declares i* as soon as Z_{i*} >= log((K - 1) * L), where L is
  the reliability parameter (the declaration is wrong with probability at
  most 1/L);
* otherwise samples the next slot from the optimal weights
  lambda*(i*, theta_hat) computed at the leader's current rate estimates.

The first `warmup_slots` slots (default K) visit processes 1..K in
round-robin order so every estimate has a chance to exist; the stop rule
is live during warm-up too (the scores are well defined from slot 1 via
the zero-count conventions). Whenever the leader's estimate pair is
unusable (a zero from unvisited or eventless cells) or degenerate (the
two estimates within 1e-9), the next slot is sampled uniformly.

Variants: "standard" as above; "non_stopping" never stops (used to study
the drift of Z); "stop_only_on" stops only when the leader equals a fixed
index (used for per-hypothesis stopping-time comparisons). All variants
consume randomness identically until they diverge by stopping, so trials
run with equal seeds are coupled: stopping times are monotone in L and
the stop-restricted variant never stops before the standard one.

Weight lookups are memoized on (K, nu rounded to 1e-6), and the cached
value is always computed at the rounded nu, never the first-seen one, so
cache contents are a pure function of the key. That keeps multi-process
experiment sweeps byte-reproducible regardless of how trials are
scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .glr import GlrState, SufficientStats, _pick_leader, _scores, _z_min_from_scores
from .numerics import DomainError
from .solver import (
    OddConfig,
    _extension_lam_hat,
    _lam_odd_from_hat,
    solve_lambda_star,
)

__all__ = [
    "VARIANTS",
    "PolicyConfig",
    "PolicyDecision",
    "Snapshot",
    "TrialOutcome",
    "leader_lambda_odd",
    "next_decision",
    "run_trial",
    "empirical_action_frequencies",
]

VARIANTS = ("standard", "non_stopping", "stop_only_on")

# Leader estimates closer than this are treated as equal-rate (no usable
# direction for the weight solver) and the next slot is sampled uniformly.
DEGENERATE_ESTIMATE_GAP = 1e-9

_QUANT = 10 ** 6


@dataclass(frozen=True)
class PolicyConfig:
    """Parameters of the sequential test.

    threshold_l: reliability parameter L >= 1; the stop threshold is
        log((k - 1) * L).
    variant: one of VARIANTS; "stop_only_on" needs stop_index.
    warmup_slots: round-robin slots before weight-driven sampling (None
        means k).
    max_slots: hard cap; a trial that reaches it is marked capped and its
        declaration carries no error guarantee.
    """

    k: int
    threshold_l: float
    variant: str = "standard"
    stop_index: int | None = None
    warmup_slots: int | None = None
    max_slots: int = 10_000_000

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 3:
            raise DomainError(f"k must be an integer >= 3, got {self.k!r}")
        if not (self.threshold_l >= 1.0 and math.isfinite(self.threshold_l)):
            raise DomainError(f"threshold_l must be finite and >= 1, got {self.threshold_l!r}")
        if self.variant not in VARIANTS:
            raise DomainError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "stop_only_on":
            if not (isinstance(self.stop_index, int) and 1 <= self.stop_index <= self.k):
                raise DomainError("stop_only_on requires stop_index in 1..k")
        elif self.stop_index is not None:
            raise DomainError("stop_index is only meaningful for the stop_only_on variant")
        if self.warmup_slots is not None and (
            not isinstance(self.warmup_slots, int) or self.warmup_slots < 0
        ):
            raise DomainError(f"warmup_slots must be a nonnegative integer, got {self.warmup_slots!r}")
        if not isinstance(self.max_slots, int) or self.max_slots < 1:
            raise DomainError(f"max_slots must be a positive integer, got {self.max_slots!r}")
        if self.max_slots < self.warmup:
            raise DomainError(
                f"max_slots ({self.max_slots}) must cover the warm-up ({self.warmup} slots)"
            )

    @property
    def warmup(self) -> int:
        return self.k if self.warmup_slots is None else self.warmup_slots

    @property
    def log_threshold(self) -> float:
        return math.log((self.k - 1) * self.threshold_l)


@dataclass(frozen=True)
class PolicyDecision:
    """What the policy does at the end of a slot: stop and declare, or
    continue with `action` drawn from `distribution`."""

    stop: bool
    declared: int | None = None
    action: int | None = None
    distribution: tuple[float, ...] | None = None


@dataclass(frozen=True)
class Snapshot:
    """Mid-trial state capture (used by drift studies and trace audits)."""

    n: int
    leader: int
    z_min: tuple[float, ...]
    visits: tuple[int, ...]
    events: tuple[int, ...]
    total: int


@dataclass(frozen=True)
class TrialOutcome:
    """Result of one simulated trial.

    tau is the stopping slot (or max_slots if capped), delta the declared
    odd index (the final leader when capped or never stopping), correct
    whether delta matches the truth. Final tallies are always carried;
    the per-slot trace only when requested.
    """

    k: int
    tau: int
    delta: int
    correct: bool
    capped: bool
    visits: tuple[int, ...]
    events: tuple[int, ...]
    total: int
    z_min: tuple[float, ...]
    trace: tuple[dict, ...] | None = None
    snapshots: tuple[Snapshot, ...] | None = None


_shared_lambda_cache: dict[tuple[int, int], float] = {}


def leader_lambda_odd(k: int, theta_1: float, theta_2: float, cache: dict | None = None) -> float:
    """Odd-process weight lambda*(k, nu) at the quantized nu of the
    estimate pair. Values are memoized per (k, quantized nu) and computed
    at the quantized point, so the cache is insertion-order independent."""
    nu = theta_1 / (theta_1 + theta_2)
    q = round(nu * _QUANT)
    if q < 1:
        q = 1
    elif q > _QUANT - 1:
        q = _QUANT - 1
    store = _shared_lambda_cache if cache is None else cache
    key = (k, q)
    lam_odd = store.get(key)
    if lam_odd is None:
        nu_q = q / _QUANT
        if abs(nu_q - 0.5) < DEGENERATE_ESTIMATE_GAP:
            lam_hat = _extension_lam_hat(k)
            lam_odd = _lam_odd_from_hat(lam_hat, (k - 2) / (k - 1))
        else:
            lam_odd = solve_lambda_star(OddConfig(k, 1, nu_q, 1.0 - nu_q)).lam_odd
        store[key] = lam_odd
    return lam_odd


def _weighted_action(leader: int, lam_odd: float, k: int, u: float) -> int:
    """Map one uniform draw to an action: mass lam_odd on the leader,
    the remainder uniform over the others."""
    if u < lam_odd:
        return leader
    frac = (u - lam_odd) / (1.0 - lam_odd)
    idx = int(frac * (k - 1))
    if idx > k - 2:
        idx = k - 2
    return idx + 1 if idx + 1 < leader else idx + 2


def _uniform_action(k: int, u: float) -> int:
    idx = int(u * k)
    if idx > k - 1:
        idx = k - 1
    return idx + 1


def _weighted_distribution(leader: int, lam_odd: float, k: int) -> tuple[float, ...]:
    off = (1.0 - lam_odd) / (k - 1)
    return tuple(lam_odd if j == leader else off for j in range(1, k + 1))


def next_decision(
    config: PolicyConfig,
    glr: GlrState | None,
    rng,
    cache: dict | None = None,
) -> PolicyDecision:
    """One policy step at the end of a slot (glr=None means no slot has
    been observed yet). Checks the stop rule, then selects the next
    action: round-robin during warm-up, weight-driven at the leader's
    estimates otherwise, uniform when those estimates are unusable.

    Draw discipline (coupling contract): no draw for a stop or a warm-up
    action; exactly one uniform for a weighted or fallback action. Leader
    tie-breaks inside `modified_glr` consume their own draws.
    """
    n = 0
    if glr is not None:
        n = glr.n
        if config.variant != "non_stopping":
            leader = glr.leader
            if (config.variant == "standard" or leader == config.stop_index) and glr.z_min[
                leader - 1
            ] >= config.log_threshold:
                return PolicyDecision(stop=True, declared=leader)
    k = config.k
    if n < config.warmup:
        action = (n % k) + 1
        dist = tuple(1.0 if j == action else 0.0 for j in range(1, k + 1))
        return PolicyDecision(stop=False, action=action, distribution=dist)
    if glr is None:
        # warmup_slots == 0 and nothing observed: no estimates exist yet
        u = float(rng.random())
        return PolicyDecision(
            stop=False, action=_uniform_action(k, u), distribution=tuple([1.0 / k] * k)
        )
    leader = glr.leader
    t1, t2 = glr.theta[leader - 1]
    if t1 <= 0.0 or t2 <= 0.0 or abs(t1 - t2) < DEGENERATE_ESTIMATE_GAP:
        u = float(rng.random())
        return PolicyDecision(
            stop=False, action=_uniform_action(k, u), distribution=tuple([1.0 / k] * k)
        )
    lam_odd = leader_lambda_odd(k, float(t1), float(t2), cache)
    u = float(rng.random())
    return PolicyDecision(
        stop=False,
        action=_weighted_action(leader, lam_odd, k, u),
        distribution=_weighted_distribution(leader, lam_odd, k),
    )


def run_trial(
    config: PolicyConfig,
    truth: OddConfig,
    rng,
    collect_trace: bool = False,
    checkpoints: Sequence[int] | None = None,
    cache: dict | None = None,
) -> TrialOutcome:
    """Simulate one trial of the policy against a scalar-rate truth.

    Per slot: observe a Poisson count from the chosen process, update the
    tallies, recompute the scores, then apply `next_decision` semantics
    (inlined for speed; the replay test pins the equivalence). The trace,
    when collected, has one record per slot
    {"n", "action", "count", "leader", "z_leader"} plus a terminal
    {"tau", "delta", "correct", "capped"} record.
    """
    if truth.dim != 1:
        raise DomainError("simulation supports scalar-rate configurations only")
    if truth.k != config.k:
        raise DomainError(f"truth has k={truth.k} but the policy was configured for k={config.k}")
    k = config.k
    odd = truth.odd_index
    rates = [truth.r2[0]] * k
    rates[odd - 1] = truth.r1[0]
    warmup = config.warmup
    threshold = config.log_threshold
    may_stop = config.variant != "non_stopping"
    stop_ix = config.stop_index
    cp = frozenset(int(c) for c in checkpoints) if checkpoints else frozenset()

    stats = SufficientStats(k=k)
    visits = stats.visits
    events = stats.events
    trace: list[dict] | None = [] if collect_trace else None
    snaps: list[Snapshot] = []

    # Action for slot 1.
    if warmup >= 1:
        action = 1
    else:
        action = _uniform_action(k, float(rng.random()))

    stopped = False
    leader = 1
    z_min = [0.0] * k
    m = 0
    for m in range(1, config.max_slots + 1):
        x = int(rng.poisson(rates[action - 1]))
        # Counts come from the generator; skip per-call revalidation.
        stats.n = m
        visits[action - 1] += 1
        events[action - 1] += x
        stats.total += x
        avg, ml = _scores(stats)
        z_min = _z_min_from_scores(avg, ml)
        leader = _pick_leader(z_min, rng)
        if trace is not None:
            trace.append(
                {
                    "n": m,
                    "action": action,
                    "count": x,
                    "leader": leader,
                    "z_leader": z_min[leader - 1],
                }
            )
        if m in cp:
            snaps.append(
                Snapshot(
                    n=m,
                    leader=leader,
                    z_min=tuple(z_min),
                    visits=tuple(visits),
                    events=tuple(events),
                    total=stats.total,
                )
            )
        if may_stop and (stop_ix is None or leader == stop_ix) and z_min[leader - 1] >= threshold:
            stopped = True
            break
        # Select the action for slot m + 1.
        if m < warmup:
            action = (m % k) + 1
            continue
        lv = visits[leader - 1]
        le = events[leader - 1]
        t1 = le / lv if lv > 0 else 0.0
        rest = m - lv
        t2 = (stats.total - le) / rest if rest > 0 else 0.0
        if t1 <= 0.0 or t2 <= 0.0 or abs(t1 - t2) < DEGENERATE_ESTIMATE_GAP:
            action = _uniform_action(k, float(rng.random()))
        else:
            lam_odd = leader_lambda_odd(k, t1, t2, cache)
            action = _weighted_action(leader, lam_odd, k, float(rng.random()))

    capped = not stopped
    outcome_trace: tuple[dict, ...] | None = None
    if trace is not None:
        trace.append({"tau": m, "delta": leader, "correct": leader == odd, "capped": capped})
        outcome_trace = tuple(trace)
    return TrialOutcome(
        k=k,
        tau=m,
        delta=leader,
        correct=leader == odd,
        capped=capped,
        visits=tuple(visits),
        events=tuple(events),
        total=stats.total,
        z_min=tuple(z_min),
        trace=outcome_trace,
        snapshots=tuple(snaps) if checkpoints else None,
    )


def empirical_action_frequencies(outcome: TrialOutcome) -> tuple[float, ...]:
    """Fraction of slots spent on each process, from the trace."""
    if outcome.trace is None:
        raise DomainError("empirical_action_frequencies requires a trial run with collect_trace")
    counts = [0] * outcome.k
    slots = 0
    for rec in outcome.trace:
        if "action" in rec:
            counts[rec["action"] - 1] += 1
            slots += 1
    return tuple(c / slots for c in counts)
