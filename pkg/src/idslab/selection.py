"""Dynamic acceptance machinery: score cache, percentile bands, refresh.

A candidate is accepted when its score's percentile rank inside the cache
of recently seen scores lands in the method's band. The cache is cleared
every ``refresh_period`` model updates so that stale high scores from an
earlier model state cannot choke acceptance as score distributions drift
downward over training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .scoring import AcquisitionMethod


class Band(Enum):
    TOP = "top"
    LOW = "low"
    MID = "mid"


_BAND_BY_METHOD = {
    AcquisitionMethod.HARD_EMB: Band.LOW,
    AcquisitionMethod.MODERATE_EMB: Band.MID,
}


def band_for(method: AcquisitionMethod) -> Band:
    """Acceptance band: moderate-embedding takes the middle, hard-embedding
    the low tail, every other method the top."""
    return _BAND_BY_METHOD.get(method, Band.TOP)


class ScoreCache:
    """Append-only scores since the last refresh, cleared every
    ``refresh_period`` model updates (``None`` disables refreshing).

    Backed by a growable float64 buffer so percentile counting stays a
    single pass over contiguous memory.
    """

    def __init__(self, refresh_period: int | None):
        if refresh_period is not None and refresh_period < 1:
            raise ValueError("refresh_period must be >= 1 (or None)")
        self.refresh_period = refresh_period
        self.updates_since_refresh = 0
        self.refresh_count = 0
        self._buf = np.empty(1024, dtype=np.float64)
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def scores(self) -> np.ndarray:
        return self._buf[: self._size]

    def append(self, score: float) -> None:
        if self._size == self._buf.size:
            grown = np.empty(self._buf.size * 2, dtype=np.float64)
            grown[: self._size] = self._buf
            self._buf = grown
        self._buf[self._size] = score
        self._size += 1

    def percentile_rank(self, score: float) -> float:
        if self._size == 0:
            return 100.0
        below = kernels.count_strictly_less(self._buf[: self._size], float(score))
        return 100.0 * below / self._size

    def clear(self) -> None:
        self._size = 0


@dataclass(frozen=True)
class SelectionPolicy:
    """Method plus target selection rate p (percent of seen candidates)."""

    method: AcquisitionMethod
    selection_rate: float = 20.0

    def __post_init__(self):
        if not (0.0 < self.selection_rate <= 100.0):
            raise ValueError("selection_rate must be in (0, 100]")

    @property
    def band(self) -> Band:
        return band_for(self.method)


class Decision(NamedTuple):
    accepted: bool
    percentile: float


def decide(score: float, cache: ScoreCache, policy: SelectionPolicy) -> Decision:
    """Accept/reject one candidate and record its score.

    The percentile is computed against the cache *before* the candidate's
    own score is appended; the score is appended whether or not the
    candidate is accepted (the cache tracks seen candidates, not selected
    ones). An empty cache ranks everything at 100, so the first candidate
    after a refresh is accepted under the top band.
    """
    if not np.isfinite(score):
        raise ValueError("candidate score must be finite")
    q = cache.percentile_rank(score)
    p = policy.selection_rate
    if policy.band is Band.TOP:
        accepted = q >= 100.0 - p
    elif policy.band is Band.LOW:
        accepted = q <= p
    else:
        accepted = (50.0 - p / 2.0) <= q <= (50.0 + p / 2.0)
    cache.append(score)
    return Decision(accepted, q)


def on_model_update(
    cache: ScoreCache, recompute_prototypes: Callable[[], None] | None = None
) -> bool:
    """Advance the update counter; clear the cache when it reaches the
    refresh period.

    Returns True when a refresh happened. ``recompute_prototypes`` runs at
    refresh time for validation-prototype methods, which re-derive class
    means on the same schedule.
    """
    cache.updates_since_refresh += 1
    if (
        cache.refresh_period is not None
        and cache.updates_since_refresh >= cache.refresh_period
    ):
        cache.clear()
        cache.updates_since_refresh = 0
        cache.refresh_count += 1
        if recompute_prototypes is not None:
            recompute_prototypes()
        return True
    return False


@dataclass
class CountTable:
    """Monotone integer counters keyed by class index or example id."""

    counts: dict[int, int] = field(default_factory=dict)

    def increment(self, key: int, by: int = 1) -> None:
        self.counts[key] = self.counts.get(key, 0) + by

    def get(self, key: int) -> int:
        return self.counts.get(key, 0)

    def total(self) -> int:
        return sum(self.counts.values())
