"""Paired statistics for per-case score deltas.

The permutation test flips the sign of each delta independently. With at
most ``EXHAUSTIVE_MAX_N`` pairs every sign vector is enumerated and the exact
rational p is reported; above that, ``resamples`` seeded draws with add-one
smoothing are used. Bootstrap intervals use the percentile method.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EXHAUSTIVE_MAX_N = 12
DEFAULT_RESAMPLES = 10_000
DEFAULT_SEED = 20260420
# Relative slack so float rounding in the mean never breaks a tie.
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class PairedSample:
    case_ids: tuple[str, ...]
    values_a: tuple[float, ...]
    values_b: tuple[float, ...]

    def __post_init__(self):
        n = len(self.case_ids)
        if n < 2:
            raise ValueError("a paired sample needs at least two cases")
        if len(self.values_a) != n or len(self.values_b) != n:
            raise ValueError("paired vectors must align with case_ids")
        if len(set(self.case_ids)) != n:
            raise ValueError("case_ids must be unique")

    @classmethod
    def from_maps(cls, a: dict[str, float], b: dict[str, float]) -> PairedSample:
        """Align two per-case maps on their shared case ids, sorted."""
        if set(a) != set(b):
            raise ValueError(f"unpaired cases: {sorted(set(a) ^ set(b))}")
        ids = tuple(sorted(a))
        return cls(ids, tuple(float(a[k]) for k in ids), tuple(float(b[k]) for k in ids))

    @property
    def n(self) -> int:
        return len(self.case_ids)

    def deltas(self) -> np.ndarray:
        return np.asarray(self.values_a, dtype=float) - np.asarray(self.values_b, dtype=float)


def _deltas(sample) -> np.ndarray:
    d = sample.deltas() if isinstance(sample, PairedSample) else np.asarray(sample, dtype=float)
    if d.ndim != 1 or d.size < 2:
        raise ValueError("need at least two paired deltas")
    return d


def _sign_matrix(n: int) -> np.ndarray:
    """All 2**n sign vectors as rows of +-1."""
    codes = np.arange(2**n, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(n, dtype=np.int64)) & 1
    return 1.0 - 2.0 * bits


def paired_permutation(sample, resamples: int = DEFAULT_RESAMPLES, seed: int = DEFAULT_SEED,
                       *, exhaustive: bool | None = None) -> float:
    """Two-sided sign-flip permutation p for the mean paired delta."""
    d = _deltas(sample)
    n = d.size
    observed = abs(d.mean())
    threshold = observed - _TIE_RTOL * max(1.0, observed)
    if exhaustive is None:
        exhaustive = n <= EXHAUSTIVE_MAX_N
    if exhaustive:
        if n > 24:
            raise ValueError("exhaustive enumeration limited to n <= 24")
        stats = np.abs(_sign_matrix(n) @ d) / n
        return float(np.count_nonzero(stats >= threshold)) / stats.size
    if resamples < 1:
        raise ValueError("resamples must be positive")
    rng = np.random.default_rng(seed)
    signs = rng.choice((-1.0, 1.0), size=(resamples, n))
    stats = np.abs(signs @ d) / n
    return (1.0 + np.count_nonzero(stats >= threshold)) / (resamples + 1.0)


def cohens_h(p1: float, p2: float) -> float:
    for p in (p1, p2):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"proportion {p} outside [0, 1]")
    return 2.0 * math.asin(math.sqrt(p1)) - 2.0 * math.asin(math.sqrt(p2))


def paired_bootstrap_ci(sample, resamples: int = DEFAULT_RESAMPLES, level: float = 0.95,
                        seed: int = DEFAULT_SEED) -> tuple[float, float]:
    """Percentile interval for the mean delta under case resampling."""
    d = _deltas(sample)
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, d.size, size=(resamples, d.size))
    means = d[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(means, [alpha, 1.0 - alpha])
    # Clamp to the observed-delta hull; the quantile of a constant can wobble by one ulp.
    return float(max(low, d.min())), float(min(high, d.max()))


@dataclass(frozen=True)
class PairedStatsResult:
    mean_a: float
    mean_b: float
    mean_delta: float
    p_value: float
    cohens_h: float
    ci_low: float
    ci_high: float
    n: int
    resamples: int
    seed: int


def paired_stats(sample: PairedSample, resamples: int = DEFAULT_RESAMPLES,
                 seed: int = DEFAULT_SEED, level: float = 0.95) -> PairedStatsResult:
    d = sample.deltas()
    mean_a = float(np.mean(sample.values_a))
    mean_b = float(np.mean(sample.values_b))
    low, high = paired_bootstrap_ci(sample, resamples, level, seed)
    mean_delta = float(d.mean())
    # The percentile interval need not cover the mean for skewed deltas; widen to keep it inside.
    low, high = min(low, mean_delta), max(high, mean_delta)
    h = cohens_h(min(max(mean_a, 0.0), 1.0), min(max(mean_b, 0.0), 1.0))
    return PairedStatsResult(mean_a, mean_b, mean_delta, paired_permutation(sample, resamples, seed), h,
                             low, high, sample.n, resamples, seed)


TABLE_COLUMNS = ("budget", "metric", "mean_dpm", "mean_summ", "mean_delta", "p", "cohens_h", "ci_low", "ci_high")


def stats_table_csv(rows: Sequence[tuple[str, str, PairedStatsResult | None]]) -> str:
    """CSV with one row per (budget, metric); ``None`` marks a missing cell."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for budget, metric, res in rows:
        if res is None:
            writer.writerow([budget, metric] + ["NA"] * 7)
            continue
        writer.writerow([budget, metric, f"{res.mean_a:.3f}", f"{res.mean_b:.3f}", f"{res.mean_delta:+.3f}",
                         f"{res.p_value:.4f}", f"{res.cohens_h:+.2f}", f"{res.ci_low:+.3f}",
                         f"{res.ci_high:+.3f}"])
    return buf.getvalue()
