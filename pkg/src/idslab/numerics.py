"""Shared dense linear-algebra and statistics primitives.

Everything here is a pure function over 64-bit floats; hot operations
delegate to :mod:`idslab.kernels`.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from . import kernels


class UndefinedCorrelationError(ValueError):
    """Raised when a rank correlation is undefined (constant sequence)."""


def as_vector(values) -> np.ndarray:
    """Coerce to a contiguous float64 1-D array."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax (max-subtraction, shift invariant).

    Output entries lie in (0, 1] and sum to 1 within 1e-12.
    """
    arr = as_vector(logits)
    if arr.size == 0:
        raise ValueError("softmax of an empty vector is undefined")
    if not np.all(np.isfinite(arr)):
        raise ValueError("softmax input must be finite")
    return kernels.softmax(arr)


def percentile_rank(score: float, cache) -> float:
    """Strict-less percentile of ``score`` within ``cache``, in [0, 100].

    Defined as 100 * |{c in cache : c < score}| / |cache|. An empty cache
    yields 100 so the first candidate after a refresh is always accepted
    under a top-band rule.
    """
    arr = np.asarray(cache, dtype=np.float64)
    if arr.size == 0:
        return 100.0
    return 100.0 * kernels.count_strictly_less(arr, float(score)) / arr.size


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their covered ranks."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # ranks i+1 .. j+1 share the same value; assign their mean
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties.

    Raises ``UndefinedCorrelationError`` when either sequence is constant.
    """
    xa = as_vector(a)
    xb = as_vector(b)
    if xa.size != xb.size:
        raise ValueError(f"length mismatch: {xa.size} vs {xb.size}")
    if xa.size < 2:
        raise ValueError("need at least two observations")
    ra = _average_ranks(xa)
    rb = _average_ranks(xb)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra @ ra) * (rb @ rb))
    if denom == 0.0:
        raise UndefinedCorrelationError("constant sequence has no rank correlation")
    return float(np.clip((ra @ rb) / denom, -1.0, 1.0))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two equal-length vectors, in [-1, 1]."""
    xa = as_vector(a)
    xb = as_vector(b)
    if xa.size != xb.size:
        raise ValueError(f"length mismatch: {xa.size} vs {xb.size}")
    na = np.linalg.norm(xa)
    nb = np.linalg.norm(xb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity with a zero-norm vector is undefined")
    return float(np.clip((xa @ xb) / (na * nb), -1.0, 1.0))


def rolling_mean(series, window: int) -> np.ndarray:
    """Trailing mean with an expanding warm-up.

    out[i] = mean(series[max(0, i-window+1) .. i]); the first ``window-1``
    entries average over the shorter available prefix.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    arr = as_vector(series)
    if arr.size == 0:
        return arr
    csum = np.cumsum(arr)
    out = np.empty_like(arr)
    head = min(window, arr.size)
    out[:head] = csum[:head] / np.arange(1, head + 1)
    if arr.size > window:
        out[window:] = (csum[window:] - csum[:-window]) / window
    return out


def jaccard(a: Iterable, b: Iterable) -> float:
    """Intersection-over-union of two id sets.

    Two empty sets compare equal, so their overlap is 1.0 by convention.
    """
    sa = set(a)
    sb = set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)
