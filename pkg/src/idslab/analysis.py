"""Post-hoc diagnostics over finished runs.

Pure functions over immutable run results: selection-overlap matrices,
normalized score-evolution traces, usage statistics, acceptance-rate
series, scoring-rule rank agreement, and a label-noise audit of what got
selected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harness import RunResult
from .model import LinearSoftmaxModel
from .numerics import UndefinedCorrelationError, jaccard, rolling_mean, spearman
from .scoring import ClassPrototypes, score_exact_delta, score_peaks, score_peaks_v
from .stream import Dataset


@dataclass
class OverlapReport:
    """Pairwise selection overlap between runs, initial sets excluded."""

    labels: list[str]
    selected_jaccard: np.ndarray
    seen_jaccard: np.ndarray
    final_accuracy: list[float | None]


def _method_label(result: RunResult) -> str:
    return result.config["method"]["method"]


def overlap_matrix(results: list[RunResult], labels: list[str] | None = None) -> OverlapReport:
    """Jaccard overlap of runs' selections (and of the candidates they saw).

    Selected sets drop each run's initial ids: those were drawn at random,
    not chosen by the method. Seen sets take each run's candidate-log ids
    once, regardless of how often an id was re-drawn.
    """
    if labels is None:
        labels = [_method_label(r) for r in results]
    if len(labels) != len(results):
        raise ValueError("one label per run required")
    chosen = [set(r.selected_ids) - r.initial_ids for r in results]
    seen = [set(r.candidate_log.id) for r in results]
    n = len(results)
    sel = np.ones((n, n))
    saw = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            sel[i, j] = sel[j, i] = jaccard(chosen[i], chosen[j])
            saw[i, j] = saw[j, i] = jaccard(seen[i], seen[j])
    return OverlapReport(
        labels=list(labels),
        selected_jaccard=sel,
        seen_jaccard=saw,
        final_accuracy=[r.final_test_accuracy for r in results],
    )


def score_trace(scores, window: int = 500) -> np.ndarray:
    """Rolling mean of candidate scores scaled by its own maximum.

    The scaling bounds the trace above by 1 so differently-scaled scoring
    rules can share an axis. Undefined when the maximum rolling mean is
    not positive.
    """
    smoothed = rolling_mean(scores, window)
    if smoothed.size == 0:
        return smoothed
    peak = smoothed.max()
    if peak <= 0.0:
        raise ValueError("score trace needs a positive maximum rolling mean")
    return smoothed / peak


def acceptance_rate_series(accepted, window: int) -> np.ndarray:
    """Rolling acceptance fraction over the candidate decision sequence."""
    flags = np.asarray(accepted, dtype=np.float64)
    return rolling_mean(flags, window)


def rank_correlation_experiment(
    model: LinearSoftmaxModel,
    features: np.ndarray,
    labels: np.ndarray,
    prototypes: ClassPrototypes,
) -> dict[tuple[str, str], float | None]:
    """Pairwise Spearman agreement of the three product-score variants.

    Scores every pool example under the exact per-probe delta, the
    validation-mean product, and the logit product, then rank-correlates
    each pair. Undefined correlations (constant score vectors, e.g. the
    logit product under a zero model) are reported as None, never coerced
    to a number.
    """
    names = ("exact_delta", "peaks_v", "peaks")
    cols = {name: np.empty(len(labels)) for name in names}
    for i in range(len(labels)):
        phi, y = features[i], int(labels[i])
        cols["exact_delta"][i] = score_exact_delta(model, phi, y, prototypes)
        cols["peaks_v"][i] = score_peaks_v(model, phi, y, prototypes)
        cols["peaks"][i] = score_peaks(model, phi, y)
    out: dict[tuple[str, str], float | None] = {}
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            try:
                out[(a, b)] = spearman(cols[a], cols[b])
            except UndefinedCorrelationError:
                out[(a, b)] = None
    return out


@dataclass
class UsageSummary:
    counts: np.ndarray
    mean: float
    variance: float
    std: float
    histogram: dict[int, int]


def usage_histogram(usage_counts) -> UsageSummary:
    """Distribution of how often each selected example entered a batch."""
    if isinstance(usage_counts, dict):
        counts = np.asarray(sorted(usage_counts.values()), dtype=np.int64)
    else:
        counts = np.sort(np.asarray(usage_counts, dtype=np.int64))
    if counts.size == 0:
        raise ValueError("no usage counts to summarize")
    values, freq = np.unique(counts, return_counts=True)
    return UsageSummary(
        counts=counts,
        mean=float(counts.mean()),
        variance=float(counts.var()),
        std=float(counts.std()),
        histogram={int(v): int(f) for v, f in zip(values, freq)},
    )


def noise_audit(selected_ids, dataset: Dataset) -> float:
    """Fraction of selected examples whose label disagrees with ground truth.

    Only ids with a known clean label participate; raises when none do.
    """
    wanted = set(int(i) for i in selected_ids)
    rows = [r for r in range(len(dataset)) if int(dataset.ids[r]) in wanted]
    rows = [r for r in rows if dataset.clean_labels[r] >= 0]
    if not rows:
        raise ValueError("no selected examples with known clean labels")
    rows = np.asarray(rows, dtype=np.int64)
    flipped = dataset.labels[rows] != dataset.clean_labels[rows]
    return float(np.count_nonzero(flipped) / rows.size)
