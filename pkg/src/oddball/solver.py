"""Optimal sampling weights and the detectability index for odd-process search.

Setting: K >= 3 Poisson processes observed one per time slot; a single odd
process has rate r1 and every other process has rate r2 (r1 != r2, both
unknown to the observer but fixed here as the design point). A sampling
distribution lambda over the K processes determines how fast evidence
accumulates against the worst-case confusion between the true arrangement
and any alternative. The value of the resulting max-min game,

    D* = max_lambda min_alt  E[ per-slot log-likelihood drift ],

is the detectability index: the best achievable asymptotic ratio of
log(1/error) to expected sample count. At the optimum the sampling weight
is lambda_odd on the odd process and (1 - lambda_odd) / (K - 1) on each of
the others.

Solving the game reduces to one dimension. Let rho = (K - 2) / (K - 1) and
reparametrize lambda_odd as

    lam_hat = lambda_odd / (lambda_odd + (1 - lambda_odd) * rho),

so the worst-case reference rate is the plain convex combination

    r_tilde = lam_hat * r1 + (1 - lam_hat) * r2.

The objective

    f(lambda_odd) = lambda_odd * D(r1 || r_tilde)
                    + (1 - lambda_odd) * rho * D(r2 || r_tilde)

is concave with f(0) = f(1) = 0, and its maximizer is the unique root of

    g(lam_hat) = D(r1 || r_tilde) - rho * D(r2 || r_tilde) = 0,

which `solve_lambda_star` finds by bisection (g is positive at lam_hat = 0
and negative at lam_hat = 1). At the root, f = D(r1 || r_tilde).

Vector rates (each process emits D independent Poisson coordinates) use
the same machinery with D(. || .) replaced by the coordinate sum and a
shared lam_hat; everything reduces to the scalar case when D = 1.

For equal rates the game degenerates (D* = 0) but the optimizer has a
well-defined limit: expanding g to second order around r1 = r2 gives
(1 - lam_hat)^2 = rho * lam_hat^2, i.e. lam_hat = 1 / (1 + sqrt(rho)).
The scalar solution depends on (r1, r2) only through nu = r1 / (r1 + r2),
and D* scales linearly in (r1 + r2); both facts are exploited by callers
and pinned by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import DomainError, binary_relative_entropy, poisson_kl

__all__ = [
    "DegenerateRatesError",
    "OddConfig",
    "LambdaSolution",
    "mixed_rate",
    "objective",
    "solve_lambda_star",
    "lambda_star_continuous_extension",
    "d_star",
    "brute_force_d_star",
    "lower_bound_expected_tau",
    "curve_rows",
    "CURVE_HEADER",
]

DEFAULT_TOL = 1e-10

# Below this distance of nu from 1/2 bisection residuals drown in rounding
# noise, so the solver switches to the continuous-extension weight.
NEAR_DEGENERATE_NU = 1e-9


class DegenerateRatesError(DomainError):
    """r1 == r2: the game value is 0 and no interior stationary point exists."""


def _as_rate_tuple(value, name: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        value = (value,)
    try:
        rates = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise DomainError(f"{name} must be a positive rate or sequence of rates, got {value!r}") from None
    if not rates:
        raise DomainError(f"{name} must contain at least one rate")
    for v in rates:
        if not (v > 0.0 and math.isfinite(v)):
            raise DomainError(f"{name} rates must be positive and finite, got {v!r}")
    return rates


@dataclass(frozen=True)
class OddConfig:
    """Ground-truth arrangement: K processes, one odd, two rate profiles.

    `r1` and `r2` accept a single rate or a sequence (one value per
    coordinate of a vector-valued process); they are stored as tuples of
    equal length. Degenerate configs (r1 == r2 exactly) are representable
    so that callers can route them to the continuous extension; the solver
    itself rejects them.
    """

    k: int
    odd_index: int
    r1: tuple[float, ...]
    r2: tuple[float, ...]

    def __init__(self, k: int, odd_index: int, r1, r2):
        if not isinstance(k, int) or k < 3:
            raise DomainError(f"k must be an integer >= 3, got {k!r}")
        if not isinstance(odd_index, int) or not 1 <= odd_index <= k:
            raise DomainError(f"odd_index must lie in 1..{k}, got {odd_index!r}")
        r1t = _as_rate_tuple(r1, "r1")
        r2t = _as_rate_tuple(r2, "r2")
        if len(r1t) != len(r2t):
            raise DomainError(f"r1 and r2 must have equal dimension, got {len(r1t)} and {len(r2t)}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "odd_index", odd_index)
        object.__setattr__(self, "r1", r1t)
        object.__setattr__(self, "r2", r2t)

    @property
    def dim(self) -> int:
        return len(self.r1)

    @property
    def is_degenerate(self) -> bool:
        return self.r1 == self.r2

    @property
    def rho(self) -> float:
        """(K - 2) / (K - 1), the off-odd mass deflation factor."""
        return (self.k - 2) / (self.k - 1)

    @property
    def nu(self) -> float:
        """r1 / (r1 + r2); defined for scalar configs only."""
        if self.dim != 1:
            raise DomainError("nu is defined for scalar-rate configs only")
        return self.r1[0] / (self.r1[0] + self.r2[0])


@dataclass(frozen=True)
class LambdaSolution:
    """Optimal sampling weights and the value they achieve.

    lam:      full probability vector over the K processes (odd_index gets
              lam_odd, the rest share the remainder uniformly).
    lam_hat:  convex-combination weight such that
              r_tilde = lam_hat * r1 + (1 - lam_hat) * r2 coordinatewise.
    r_tilde:  worst-case reference rate, one entry per coordinate.
    nu:       r1 / (r1 + r2) for scalar configs, None for vector configs.
    d_star:   objective value at lam_odd (0 exactly for degenerate configs).
    """

    config: OddConfig
    lam: tuple[float, ...]
    lam_odd: float
    lam_hat: float
    r_tilde: tuple[float, ...]
    nu: float | None
    d_star: float


def mixed_rate(lambda_odd: float, r1, r2, k: int):
    """Worst-case reference rate for sampling weight lambda_odd.

        r_tilde = (lambda_odd * r1 + (1 - lambda_odd) * rho * r2)
                  / (lambda_odd + (1 - lambda_odd) * rho),
        rho = (k - 2) / (k - 1).

    Scalar arguments give a float; sequences are mapped coordinatewise and
    give a tuple. mixed_rate(0.5, 3.0, 2.0, 3) == 8/3.
    """
    if not isinstance(k, int) or k < 3:
        raise DomainError(f"k must be an integer >= 3, got {k!r}")
    if not 0.0 <= lambda_odd <= 1.0:
        raise DomainError(f"lambda_odd must lie in [0, 1], got {lambda_odd!r}")
    rho = (k - 2) / (k - 1)
    weight = lambda_odd + (1.0 - lambda_odd) * rho
    scalar = isinstance(r1, (int, float)) and isinstance(r2, (int, float))
    r1t = _as_rate_tuple(r1, "r1")
    r2t = _as_rate_tuple(r2, "r2")
    if len(r1t) != len(r2t):
        raise DomainError("r1 and r2 must have equal dimension")
    mixed = tuple(
        (lambda_odd * a + (1.0 - lambda_odd) * rho * b) / weight
        for a, b in zip(r1t, r2t)
    )
    return mixed[0] if scalar else mixed


def objective(config: OddConfig, lambda_odd: float) -> float:
    """Game objective f(lambda_odd); concave, zero at both endpoints.

    f = lambda_odd * D(r1 || r_tilde) + (1 - lambda_odd) * rho * D(r2 || r_tilde)
    with coordinate-summed divergences for vector configs.
    """
    if not 0.0 <= lambda_odd <= 1.0:
        raise DomainError(f"lambda_odd must lie in [0, 1], got {lambda_odd!r}")
    rho = config.rho
    weight = lambda_odd + (1.0 - lambda_odd) * rho
    d1 = 0.0
    d2 = 0.0
    for a, b in zip(config.r1, config.r2):
        m = (lambda_odd * a + (1.0 - lambda_odd) * rho * b) / weight
        d1 += poisson_kl(a, m)
        d2 += poisson_kl(b, m)
    return lambda_odd * d1 + (1.0 - lambda_odd) * rho * d2


def _extension_lam_hat(k: int) -> float:
    """Equal-rates limit of the optimal lam_hat: 1 / (1 + sqrt(rho))."""
    rho = (k - 2) / (k - 1)
    return 1.0 / (1.0 + math.sqrt(rho))


def _lam_odd_from_hat(lam_hat: float, rho: float) -> float:
    """Invert lam_hat = lam / (lam + (1 - lam) * rho)."""
    return lam_hat * rho / (1.0 - lam_hat + lam_hat * rho)


def _assemble(config: OddConfig, lam_hat: float) -> LambdaSolution:
    rho = config.rho
    lam_odd = _lam_odd_from_hat(lam_hat, rho)
    off = (1.0 - lam_odd) / (config.k - 1)
    lam = tuple(lam_odd if j == config.odd_index else off for j in range(1, config.k + 1))
    r_tilde = tuple(
        lam_hat * a + (1.0 - lam_hat) * b for a, b in zip(config.r1, config.r2)
    )
    nu = config.nu if config.dim == 1 else None
    return LambdaSolution(
        config=config,
        lam=lam,
        lam_odd=lam_odd,
        lam_hat=lam_hat,
        r_tilde=r_tilde,
        nu=nu,
        d_star=objective(config, lam_odd),
    )


def _stationarity(config: OddConfig, lam_hat: float) -> tuple[float, float]:
    """Residual g(lam_hat) and its natural scale max(term1, term2)."""
    rho = config.rho
    d1 = 0.0
    d2 = 0.0
    for a, b in zip(config.r1, config.r2):
        m = lam_hat * a + (1.0 - lam_hat) * b
        d1 += poisson_kl(a, m)
        d2 += poisson_kl(b, m)
    t2 = rho * d2
    return d1 - t2, (d1 if d1 > t2 else t2)


def solve_lambda_star(config: OddConfig, tol: float = DEFAULT_TOL) -> LambdaSolution:
    """Find the optimal sampling weights by bisection in lam_hat.

    Terminates when the bracket width is <= tol AND the stationarity
    residual |D(r1 || r_tilde) - rho * D(r2 || r_tilde)| is <= tol times
    the larger of the two terms. Scalar configs with nu within 1e-9 of 1/2
    take the continuous-extension weight instead (the residual scale
    collapses quadratically there and bisection digits are meaningless).

    Raises:
        DegenerateRatesError: r1 == r2 exactly; use
            `lambda_star_continuous_extension`.
    """
    if not (tol > 0.0 and math.isfinite(tol)):
        raise DomainError(f"tol must be positive and finite, got {tol!r}")
    if config.is_degenerate:
        raise DegenerateRatesError(
            "r1 == r2: no interior optimum; use lambda_star_continuous_extension"
        )
    if config.dim == 1 and abs(config.nu - 0.5) < NEAR_DEGENERATE_NU:
        return _assemble(config, _extension_lam_hat(config.k))

    g_lo, _ = _stationarity(config, 0.0)
    g_hi, _ = _stationarity(config, 1.0)
    if not (g_lo > 0.0 and g_hi < 0.0):
        # Rates differ but by so little the residual is pure rounding noise.
        raise DegenerateRatesError(
            "stationarity residual has no sign change; rates are numerically degenerate"
        )
    lo, hi = 0.0, 1.0
    mid = 0.5
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        g_mid, scale = _stationarity(config, mid)
        if g_mid > 0.0:
            lo = mid
        else:
            hi = mid
        width = hi - lo
        if width <= tol and abs(g_mid) <= tol * scale:
            break
        if width < 1e-15:  # float resolution; the residual will not improve
            break
    return _assemble(config, mid)


def lambda_star_continuous_extension(config: OddConfig) -> LambdaSolution:
    """Equal-rates limit of the optimal weights: lam_hat = 1 / (1 + sqrt(rho)).

    Requires a structurally degenerate config (r1 == r2 exactly). The
    reference rate collapses to the common rate and d_star is exactly 0.
    """
    if not config.is_degenerate:
        raise DomainError("continuous extension applies to configs with r1 == r2 exactly")
    lam_hat = _extension_lam_hat(config.k)
    rho = config.rho
    lam_odd = _lam_odd_from_hat(lam_hat, rho)
    off = (1.0 - lam_odd) / (config.k - 1)
    lam = tuple(lam_odd if j == config.odd_index else off for j in range(1, config.k + 1))
    nu = 0.5 if config.dim == 1 else None
    return LambdaSolution(
        config=config,
        lam=lam,
        lam_odd=lam_odd,
        lam_hat=lam_hat,
        r_tilde=config.r1,
        nu=nu,
        d_star=0.0,
    )


def d_star(config: OddConfig, tol: float = DEFAULT_TOL) -> float:
    """Detectability index of the configuration; 0 exactly when r1 == r2."""
    if config.is_degenerate:
        return 0.0
    return solve_lambda_star(config, tol=tol).d_star


def _kl_grid(x: float, y: np.ndarray) -> np.ndarray:
    """Vectorized D(x || y) for scalar x >= 0 and positive array y."""
    if x == 0.0:
        return y.copy()
    return x * np.log(x / y) - x + y


def brute_force_d_star(config: OddConfig, grid_resolution: int = 400) -> float:
    """Independent evaluation of D* by direct search over the full simplex.

    Grids the sampling vector lambda over the K-dimensional probability
    simplex with the given resolution and takes the max over grid points of
    the min over alternative odd positions j != odd_index. The inner
    minimization over the alternative's rate pair is exact: the cross term
    is killed by setting the alternative odd rate to r2, and the remaining
    strictly convex single-rate problem has the closed-form minimizer

        y* = (lam_i * r1 + c_j * r2) / (lam_i + c_j),   c_j = 1 - lam_i - lam_j.

    Deliberately ignorant of the one-dimensional reduction used by
    `solve_lambda_star`; this is the oracle the solver is tested against.
    Scalar configs with K <= 4 only (the grid blows up combinatorially).
    """
    if config.dim != 1:
        raise DomainError("brute force supports scalar-rate configs only")
    if config.k > 4:
        raise DomainError(f"brute force refuses k > 4 (got k={config.k}); grid is combinatorial")
    if not isinstance(grid_resolution, int) or grid_resolution < 10:
        raise DomainError(f"grid_resolution must be an integer >= 10, got {grid_resolution!r}")
    r1 = config.r1[0]
    r2 = config.r2[0]
    res = grid_resolution
    i = config.odd_index - 1
    k = config.k

    best = 0.0
    # Enumerate lam_i deterministically; vectorize over the free off-odd
    # coordinates at fixed lam_i to keep memory bounded for K = 4.
    for ai in range(res + 1):
        lam_i = ai / res
        rem = res - ai
        if k == 3:
            aj = np.arange(rem + 1)
            others = np.stack([aj, rem - aj], axis=1) / res  # columns: the two j != i
        else:
            a1 = np.arange(rem + 1)
            a1g, a2g = np.meshgrid(a1, a1, indexing="ij")
            mask = a1g + a2g <= rem
            c1 = a1g[mask]
            c2 = a2g[mask]
            others = np.stack([c1, c2, rem - c1 - c2], axis=1) / res
        # min over j != i of the inner value at (lam_i, lam_j)
        vals = None
        for col in range(k - 1):
            lam_j = others[:, col]
            c = 1.0 - lam_i - lam_j
            c = np.where(c < 0.0, 0.0, c)  # clip grid rounding at the simplex edge
            w = lam_i + c
            pos = w > 0.0  # w == 0 only at lam_i = lam_j-complement = 0: value is 0
            y = np.where(pos, (lam_i * r1 + c * r2) / np.where(pos, w, 1.0), 1.0)
            v = np.where(pos, lam_i * _kl_grid(r1, y) + c * _kl_grid(r2, y), 0.0)
            vals = v if vals is None else np.minimum(vals, v)
        m = float(vals.max()) if vals.size else 0.0
        if m > best:
            best = m
    return best


def lower_bound_expected_tau(config: OddConfig, alpha_max: float) -> float:
    """Information bound on the expected sample count of any policy whose
    worst-case error probability is at most alpha_max:

        E[tau] >= d(alpha_max || 1 - alpha_max) / D*.

    Returns +inf for degenerate configs (no policy can decide at all).
    """
    if not 0.0 < alpha_max < 1.0:
        raise DomainError(f"alpha_max must lie in (0, 1), got {alpha_max!r}")
    if config.is_degenerate:
        return math.inf
    return binary_relative_entropy(alpha_max) / d_star(config)


CURVE_HEADER = "K,nu,lambda_odd,lambda_hat,d_star_scaled"

# Rows whose nu falls inside this band around 1/2 use the continuous
# extension weight; the reported d_star stays the true objective value at
# that weight (relative error O(band^2) against the max, exactly 0 at 1/2).
CURVE_EXTENSION_BAND = 1e-3


def curve_rows(k_values: Sequence[int], nu_steps: int) -> list[tuple[int, float, float, float, float]]:
    """Sweep of the optimal weight against nu for each K, normalized so
    r1 + r2 = 1 (d_star scales linearly in r1 + r2, so this fixes the
    scale column). Grid: nu_steps points linear on [0.01, 0.99].
    """
    ks = list(k_values)
    if not ks:
        raise DomainError("k_values must be non-empty")
    for k in ks:
        if not isinstance(k, int) or k < 3:
            raise DomainError(f"curve k values must be integers >= 3, got {k!r}")
    if not isinstance(nu_steps, int) or nu_steps < 2:
        raise DomainError(f"nu_steps must be an integer >= 2, got {nu_steps!r}")
    nus = np.linspace(0.01, 0.99, nu_steps)
    rows = []
    for k in ks:
        rho = (k - 2) / (k - 1)
        for nu in nus:
            nu = float(nu)
            config = OddConfig(k, 1, nu, 1.0 - nu)
            if abs(nu - 0.5) < CURVE_EXTENSION_BAND:
                lam_hat = _extension_lam_hat(k)
                lam_odd = _lam_odd_from_hat(lam_hat, rho)
                scaled = objective(config, lam_odd) if not config.is_degenerate else 0.0
            else:
                sol = solve_lambda_star(config)
                lam_hat, lam_odd, scaled = sol.lam_hat, sol.lam_odd, sol.d_star
            rows.append((k, nu, lam_odd, lam_hat, scaled))
    return rows
