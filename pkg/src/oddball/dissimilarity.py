"""Dissimilarity index for visual-search data.

Each image is represented by its vector of per-neuron mean firing rates
(events per slot). The dissimilarity of an (odd, distractor) image pair
in a K-item display is the optimal error exponent D* for the detection
problem whose odd process fires at the odd image's rate vector and whose
K - 1 distractor processes fire at the distractor's: larger D* means the
odd item is found faster, and decision delay should scale like 1/D*.

This module computes pairwise dissimilarity matrices from firing-rate
tables and the statistics used to evaluate an index against observed
decision delays: Pearson correlation of delay with the inverse index,
one-way ANOVA across repeated delays per pair, and the log AM/GM
dispersion of delay * index products (exactly 0 only when the index is a
perfect reciprocal predictor).

Rates must be positive for the exponent to exist, so zero (or tiny)
entries in a loaded table are raised to a configurable floor and the
flooring is recorded per cell.
"""

from __future__ import annotations

import csv
import io
import math
import multiprocessing
from dataclasses import dataclass

import numpy as np
from scipy.special import fdtrc

from .numerics import DomainError
from .solver import OddConfig, d_star

__all__ = [
    "DEFAULT_RATE_FLOOR",
    "FiringRateTable",
    "DissimilarityMatrix",
    "pairwise_dstar",
    "log_am_gm",
    "anova_f",
    "correlation",
    "synthesize_search_dataset",
    "analyze_search_delays",
    "parse_delays_csv",
    "delays_to_csv",
]

DEFAULT_RATE_FLOOR = 1e-3

MATRIX_HEADER = "odd_id,distractor_id,dstar,degenerate,floored_cells"
DELAYS_HEADER = "odd_id,distractor_id,delay"


@dataclass(frozen=True)
class FiringRateTable:
    """Per-image firing-rate vectors with a shared neuron count.

    rates[i, d] is image i's mean rate on neuron d, after flooring:
    entries below `floor` are raised to it and flagged in `floored`.
    """

    images: tuple[str, ...]
    rates: np.ndarray
    floored: np.ndarray
    floor: float

    @classmethod
    def from_arrays(cls, images, rates, floor: float = DEFAULT_RATE_FLOOR) -> "FiringRateTable":
        ids = tuple(str(s) for s in images)
        if len(ids) < 1:
            raise DomainError("table needs at least one image")
        if len(set(ids)) != len(ids):
            raise DomainError("image identifiers must be distinct")
        if not (floor > 0.0 and math.isfinite(floor)):
            raise DomainError(f"floor must be positive and finite, got {floor!r}")
        arr = np.asarray(rates, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != len(ids) or arr.shape[1] < 1:
            raise DomainError("rates must be a 2-D array, one row per image, >= 1 neuron")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise DomainError("rates must be finite and nonnegative")
        mask = arr < floor
        arr = np.where(mask, floor, arr)
        arr.setflags(write=False)
        mask.setflags(write=False)
        return cls(images=ids, rates=arr, floored=mask, floor=floor)

    @classmethod
    def from_csv(cls, text: str, floor: float = DEFAULT_RATE_FLOOR) -> "FiringRateTable":
        """Parse `image_id,neuron_1,...,neuron_D` rows."""
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise DomainError("empty firing-rate CSV") from None
        if not header or header[0].strip() != "image_id" or len(header) < 2:
            raise DomainError("firing-rate CSV header must be image_id,neuron_1,...,neuron_D")
        width = len(header)
        ids = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DomainError(f"line {lineno}: expected {width} fields, got {len(row)}")
            ids.append(row[0].strip())
            try:
                rows.append([float(cell) for cell in row[1:]])
            except ValueError as exc:
                raise DomainError(f"line {lineno}: {exc}") from None
        if not ids:
            raise DomainError("firing-rate CSV has no data rows")
        return cls.from_arrays(ids, rows, floor=floor)

    @property
    def n_images(self) -> int:
        return len(self.images)

    @property
    def n_neurons(self) -> int:
        return int(self.rates.shape[1])

    def index_of(self, image_id: str) -> int:
        try:
            return self.images.index(image_id)
        except ValueError:
            raise DomainError(f"unknown image id {image_id!r}") from None


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Ordered-pair dissimilarities: values[a, b] = D* with image a odd
    among copies of image b. Both orientations are stored; the matrix is
    not symmetric. Diagonal entries are exactly 0 and flagged degenerate,
    as is any pair with identical (post-floor) rate vectors."""

    images: tuple[str, ...]
    k: int
    values: np.ndarray
    degenerate: np.ndarray
    floored_cells: np.ndarray

    def value(self, odd_id: str, distractor_id: str) -> float:
        a = self.images.index(odd_id)
        b = self.images.index(distractor_id)
        return float(self.values[a, b])

    def to_csv(self) -> str:
        lines = [MATRIX_HEADER]
        m = len(self.images)
        for a in range(m):
            for b in range(m):
                if a == b:
                    continue
                lines.append(
                    f"{self.images[a]},{self.images[b]},{self.values[a, b]:.12g},"
                    f"{int(self.degenerate[a, b])},{int(self.floored_cells[a, b])}"
                )
        return "\n".join(lines) + "\n"


def _pair_job(args) -> float:
    (k, r1, r2) = args
    return d_star(OddConfig(k, 1, r1, r2))


def pairwise_dstar(table: FiringRateTable, k: int, parallelism: int = 1) -> DissimilarityMatrix:
    """Dissimilarity of every ordered image pair in a K-item display."""
    if not isinstance(k, int) or k < 3:
        raise DomainError(f"display size k must be an integer >= 3, got {k!r}")
    if not isinstance(parallelism, int) or parallelism < 1:
        raise DomainError(f"parallelism must be a positive integer, got {parallelism!r}")
    m = table.n_images
    values = np.zeros((m, m))
    degenerate = np.zeros((m, m), dtype=bool)
    floored = np.zeros((m, m), dtype=int)
    np.fill_diagonal(degenerate, True)
    flagged = table.floored.sum(axis=1)
    jobs = []
    slots = []
    for a in range(m):
        for b in range(m):
            floored[a, b] = int(flagged[a] + flagged[b]) if a != b else int(flagged[a])
            if a == b:
                continue
            if np.array_equal(table.rates[a], table.rates[b]):
                degenerate[a, b] = True
                continue
            jobs.append((k, tuple(table.rates[a]), tuple(table.rates[b])))
            slots.append((a, b))
    if parallelism == 1 or len(jobs) < 2:
        results = [_pair_job(job) for job in jobs]
    else:
        with multiprocessing.Pool(processes=parallelism) as pool:
            results = pool.map(_pair_job, jobs)
    for (a, b), v in zip(slots, results):
        values[a, b] = v
    values.setflags(write=False)
    degenerate.setflags(write=False)
    floored.setflags(write=False)
    return DissimilarityMatrix(
        images=table.images, k=k, values=values, degenerate=degenerate, floored_cells=floored
    )


def log_am_gm(values) -> float:
    """log of the arithmetic-to-geometric mean ratio: >= 0, and 0 exactly
    when all values are equal. Invariant under common scaling."""
    vals = [float(v) for v in values]
    if not vals:
        raise DomainError("log_am_gm needs at least one value")
    if any(not (v > 0.0 and math.isfinite(v)) for v in vals):
        raise DomainError("log_am_gm requires positive finite values")
    am = math.fsum(vals) / len(vals)
    mean_log = math.fsum(math.log(v) for v in vals) / len(vals)
    return math.log(am) - mean_log


def anova_f(groups) -> tuple[float, float]:
    """One-way ANOVA F statistic and upper-tail p-value.

    Needs >= 2 groups with >= 2 samples each. Zero within-group variance
    with distinct group means gives (inf, 0.0).
    """
    data = [[float(x) for x in g] for g in groups]
    if len(data) < 2:
        raise DomainError("anova_f needs at least two groups")
    if any(len(g) < 2 for g in data):
        raise DomainError("every group needs at least two samples")
    for g in data:
        if any(not math.isfinite(x) for x in g):
            raise DomainError("anova_f requires finite samples")
    n_total = sum(len(g) for g in data)
    grand = math.fsum(math.fsum(g) for g in data) / n_total
    means = [math.fsum(g) / len(g) for g in data]
    ss_between = math.fsum(len(g) * (m - grand) ** 2 for g, m in zip(data, means))
    ss_within = math.fsum(math.fsum((x - m) ** 2 for x in g) for g, m in zip(data, means))
    df_between = len(data) - 1
    df_within = n_total - len(data)
    if ss_within == 0.0:
        if ss_between == 0.0:
            return 0.0, 1.0
        return math.inf, 0.0
    f_stat = (ss_between / df_between) / (ss_within / df_within)
    return f_stat, float(fdtrc(df_between, df_within, f_stat))


def correlation(x, y) -> float:
    """Pearson correlation coefficient of two equal-length samples."""
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    if len(xs) != len(ys):
        raise DomainError("correlation requires equal-length samples")
    if len(xs) < 3:
        raise DomainError("correlation requires at least 3 points")
    if any(not math.isfinite(v) for v in xs + ys):
        raise DomainError("correlation requires finite values")
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((v - mx) ** 2 for v in xs)
    syy = math.fsum((v - my) ** 2 for v in ys)
    if sxx == 0.0 or syy == 0.0:
        raise DomainError("correlation undefined for zero-variance input")
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(xs, ys))
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def synthesize_search_dataset(
    n_images: int,
    n_neurons: int,
    k: int,
    n_pairs: int,
    samples_per_pair: int,
    rng,
    noise_scale: float = 0.05,
    base_delay: float = 1.0,
):
    """Generate a firing-rate table plus decision delays that follow the
    reciprocal law: each sampled pair (a, b) gets `samples_per_pair`
    delays distributed around base_delay / D*(a, b) with multiplicative
    Gaussian noise. Returns (table, delays) with delays a list of
    (odd_id, distractor_id, delay) rows.
    """
    if not isinstance(n_images, int) or n_images < 2:
        raise DomainError("n_images must be an integer >= 2")
    if not isinstance(n_neurons, int) or n_neurons < 1:
        raise DomainError("n_neurons must be a positive integer")
    if not isinstance(k, int) or k < 3:
        raise DomainError(f"display size k must be an integer >= 3, got {k!r}")
    max_pairs = n_images * (n_images - 1)
    if not isinstance(n_pairs, int) or not 1 <= n_pairs <= max_pairs:
        raise DomainError(f"n_pairs must lie in 1..{max_pairs}")
    if not isinstance(samples_per_pair, int) or samples_per_pair < 1:
        raise DomainError("samples_per_pair must be a positive integer")
    if not (noise_scale >= 0.0 and math.isfinite(noise_scale)):
        raise DomainError("noise_scale must be nonnegative and finite")
    if not (base_delay > 0.0 and math.isfinite(base_delay)):
        raise DomainError("base_delay must be positive and finite")

    ids = [f"img{i:03d}" for i in range(n_images)]
    rates = rng.uniform(0.5, 8.0, size=(n_images, n_neurons))
    table = FiringRateTable.from_arrays(ids, rates)

    chosen = rng.choice(max_pairs, size=n_pairs, replace=False)
    delays = []
    for code in sorted(int(c) for c in chosen):
        a, residue = divmod(code, n_images - 1)
        b = residue if residue < a else residue + 1
        diff = d_star(OddConfig(k, 1, tuple(table.rates[a]), tuple(table.rates[b])))
        mean_delay = base_delay / diff
        for _ in range(samples_per_pair):
            value = mean_delay * (1.0 + noise_scale * float(rng.standard_normal()))
            delays.append((ids[a], ids[b], max(value, 1e-9)))
    return table, delays


def parse_delays_csv(text: str) -> list[tuple[str, str, float]]:
    """Parse `odd_id,distractor_id,delay` rows (repeated rows per pair
    are repeated delay measurements)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DomainError("empty delays CSV") from None
    if [h.strip() for h in header] != DELAYS_HEADER.split(","):
        raise DomainError(f"delays CSV header must be {DELAYS_HEADER}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DomainError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            delay = float(row[2])
        except ValueError as exc:
            raise DomainError(f"line {lineno}: {exc}") from None
        out.append((row[0].strip(), row[1].strip(), delay))
    if not out:
        raise DomainError("delays CSV has no data rows")
    return out


def delays_to_csv(delays) -> str:
    lines = [DELAYS_HEADER]
    for odd_id, distractor_id, delay in delays:
        lines.append(f"{odd_id},{distractor_id},{delay:.12g}")
    return "\n".join(lines) + "\n"


def analyze_search_delays(table: FiringRateTable, delays, k: int) -> dict:
    """Evaluate the dissimilarity index against observed decision delays.

    Groups the delay rows by (odd, distractor) pair, computes D* per
    pair, and returns `pearson_r` (mean delay vs 1/D*), `anova_f` /
    `anova_p` across the per-pair delay groups (NaN when some pair has a
    single measurement), and `log_am_gm` of the mean-delay * D* products
    (0 for a perfect reciprocal law).
    """
    if not isinstance(k, int) or k < 3:
        raise DomainError(f"display size k must be an integer >= 3, got {k!r}")
    groups: dict[tuple[str, str], list[float]] = {}
    order = []
    for odd_id, distractor_id, delay in delays:
        if not (delay > 0.0 and math.isfinite(float(delay))):
            raise DomainError(f"delays must be positive and finite, got {delay!r}")
        key = (str(odd_id), str(distractor_id))
        if key[0] == key[1]:
            raise DomainError(f"pair {key[0]!r} vs itself has no odd item")
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(float(delay))
    if len(order) < 3:
        raise DomainError("analysis needs delays for at least 3 distinct pairs")

    diffs = []
    mean_delays = []
    for odd_id, distractor_id in order:
        a = table.index_of(odd_id)
        b = table.index_of(distractor_id)
        diff = d_star(OddConfig(k, 1, tuple(table.rates[a]), tuple(table.rates[b])))
        if diff <= 0.0:
            raise DomainError(
                f"pair ({odd_id!r}, {distractor_id!r}) has identical rate vectors; "
                "delay analysis needs a positive index"
            )
        diffs.append(diff)
        samples = groups[(odd_id, distractor_id)]
        mean_delays.append(math.fsum(samples) / len(samples))

    pearson = correlation([1.0 / d for d in diffs], mean_delays)
    if all(len(groups[key]) >= 2 for key in order):
        f_stat, p_value = anova_f([groups[key] for key in order])
    else:
        f_stat, p_value = math.nan, math.nan
    dispersion = log_am_gm([m * d for m, d in zip(mean_delays, diffs)])
    return {
        "pairs": len(order),
        "pearson_r": pearson,
        "anova_f": f_stat,
        "anova_p": p_value,
        "log_am_gm": dispersion,
    }
