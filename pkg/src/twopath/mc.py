"""Reproducible batch trials and their comparison with the exact oracle.

Randomness is counter-based.  Trial ``i`` of a batch seeded with ``master``
draws its ``k``-th uniform as

    key_i = mix64(mix64(master) + (i + 1) * GAMMA)
    u_k   = (mix64(key_i + (k + 1) * GAMMA) >> 11) * 2**-53

where ``mix64`` is the SplitMix64 finalizer and ``GAMMA = 0x9E3779B97F4A7C15``
(all arithmetic mod 2**64).  A trial's outcomes therefore depend only on
``(master, i)``: they do not change when other trials are added, removed or
run in a different order or process.  This mapping is part of the
reproducibility contract and must not change.
"""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional

from .scenarios import Distribution, Scenario, observed_events, run_trial

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_TWO_M53 = 2.0**-53

Z_95 = NormalDist().inv_cdf(0.975)
SIGMA_THRESHOLD = 5.0


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class CounterStream:
    """Uniform stream for one trial; a pure function of (master_seed, trial_index)."""

    __slots__ = ("master_seed", "trial_index", "_key", "_counter")

    def __init__(self, master_seed: int, trial_index: int):
        if trial_index < 0:
            raise ValueError("trial index must be >= 0")
        self.master_seed = master_seed & MASK64
        self.trial_index = trial_index
        self._key = mix64(mix64(self.master_seed) + (trial_index + 1) * GAMMA)
        self._counter = 0

    def random(self) -> float:
        self._counter += 1
        return (mix64(self._key + self._counter * GAMMA) >> 11) * _TWO_M53

    @property
    def draws(self) -> int:
        return self._counter


def trial_stream(master_seed: int, trial_index: int) -> CounterStream:
    return CounterStream(master_seed, trial_index)


def wilson_halfwidth(count: int, total: int, z: float = Z_95) -> float:
    if total <= 0:
        raise ValueError("total must be positive")
    p = count / total
    denom = 1 + z * z / total
    return z / denom * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total))


@dataclass(frozen=True)
class StatSummary:
    events: tuple[str, ...]
    counts: dict[tuple[str, ...], int]
    total: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.total:
            raise ValueError("counts do not add up to the total")

    @property
    def freqs(self) -> dict[tuple[str, ...], float]:
        return {k: c / self.total for k, c in self.counts.items()}

    @property
    def ci_halfwidth(self) -> dict[tuple[str, ...], float]:
        return {k: wilson_halfwidth(c, self.total) for k, c in self.counts.items()}

    def freq(self, *labels: str) -> float:
        return self.counts.get(tuple(labels), 0) / self.total

    def marginal(self, event: str) -> dict[str, int]:
        k = self.events.index(event)
        out: Counter = Counter()
        for labels, c in self.counts.items():
            out[labels[k]] += c
        return dict(out)


def _count_range(s: Scenario, master_seed: int, start: int, stop: int) -> Counter:
    events = observed_events(s)
    cache: dict = {}
    counts: Counter = Counter()
    for i in range(start, stop):
        record = run_trial(s, CounterStream(master_seed, i), cache)
        counts[record.labels(events)] += 1
    return counts


def run_many(s: Scenario, trials: int, master_seed: int, workers: int = 1) -> StatSummary:
    """Aggregate ``trials`` independent trials; identical for any ``workers``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    events = observed_events(s)
    if workers <= 1 or trials < 2 * workers:
        counts = _count_range(s, master_seed, 0, trials)
    else:
        bounds = [trials * w // workers for w in range(workers + 1)]
        counts = Counter()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_count_range, s, master_seed, a, b) for a, b in zip(bounds, bounds[1:])]
            for fut in futures:
                counts.update(fut.result())
    return StatSummary(events, dict(sorted(counts.items())), trials)


@dataclass(frozen=True)
class CellCheck:
    labels: tuple[str, ...]
    p: float
    freq: float
    count: int
    z: Optional[float]
    passed: bool


@dataclass(frozen=True)
class OracleReport:
    total: int
    cells: tuple[CellCheck, ...]
    threshold: float = SIGMA_THRESHOLD

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cells)

    @property
    def max_abs_z(self) -> float:
        return max((abs(c.z) for c in self.cells if c.z is not None), default=0.0)


# Exact cells below this are treated as impossible, above 1 - this as certain.
_CERTAIN_TOL = 1e-12


def compare_to_oracle(summary: StatSummary, exact: Distribution, threshold: float = SIGMA_THRESHOLD) -> OracleReport:
    """Per-cell z-scores of empirical frequencies against exact probabilities.

    Cells with exact probability 0 or 1 pass only if the count is exactly 0
    or the full total.
    """
    if summary.events != exact.events:
        raise ValueError(f"event mismatch: {summary.events} vs {exact.events}")
    stray = set(summary.counts) - set(exact.probs)
    if stray:
        raise ValueError(f"labels not in the exact distribution: {sorted(stray)}")
    n = summary.total
    cells = []
    for labels, p in exact.probs.items():
        count = summary.counts.get(labels, 0)
        freq = count / n
        if p <= _CERTAIN_TOL:
            cells.append(CellCheck(labels, p, freq, count, None, count == 0))
        elif p >= 1 - _CERTAIN_TOL:
            cells.append(CellCheck(labels, p, freq, count, None, count == n))
        else:
            z = z_score(freq, p, n)
            cells.append(CellCheck(labels, p, freq, count, z, abs(z) < threshold))
    return OracleReport(n, tuple(cells), threshold)


def z_score(freq: float, p: float, n: int) -> float:
    return (freq - p) / math.sqrt(p * (1 - p) / n)
