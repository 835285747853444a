"""Hot numeric kernels behind the selection loop, in two interchangeable
implementations: numba-jitted loops and pure numpy.

The active path is chosen once, at import time. Numba is used when it is
importable unless the environment variable ``IDSLAB_NUMBA`` is set to
``0``/``false``/``off``, in which case the numpy path is used. Both paths
compute the same quantities with the same floating-point conventions
(64-bit, max-subtracted softmax); results agree to ~1e-12 but are only
bitwise-reproducible within a single path.

``benchmarks/bench_kernels.py`` times the two paths side by side.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_requested() -> bool:
    flag = os.environ.get("IDSLAB_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off")


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _np_softmax(logits):
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _np_row_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _np_matvec(weights, vec):
    return weights @ vec


def _np_batch_logits(features, weights):
    return features @ weights.T


def _np_count_strictly_less(values, x):
    return int(np.count_nonzero(values < x))


def _np_sgd_step(weights, features, labels, lr):
    n = features.shape[0]
    probs = _np_row_softmax(features @ weights.T)
    probs[np.arange(n), labels] -= 1.0
    weights -= (lr / n) * (probs.T @ features)


def _np_correct_count(weights, features, labels):
    logits = features @ weights.T
    return int(np.count_nonzero(np.argmax(logits, axis=1) == labels))


# ---------------------------------------------------------------------------
# numba implementations (compiled lazily on first call, cached on disk)
# ---------------------------------------------------------------------------

NUMBA_AVAILABLE = False
try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _nb_softmax(logits):
    n = logits.shape[0]
    out = np.empty(n, dtype=np.float64)
    m = logits[0]
    for i in range(1, n):
        if logits[i] > m:
            m = logits[i]
    total = 0.0
    for i in range(n):
        out[i] = np.exp(logits[i] - m)
        total += out[i]
    for i in range(n):
        out[i] /= total
    return out


@njit(cache=True)
def _nb_row_softmax(logits):
    rows, cols = logits.shape
    out = np.empty((rows, cols), dtype=np.float64)
    for r in range(rows):
        m = logits[r, 0]
        for c in range(1, cols):
            if logits[r, c] > m:
                m = logits[r, c]
        total = 0.0
        for c in range(cols):
            out[r, c] = np.exp(logits[r, c] - m)
            total += out[r, c]
        for c in range(cols):
            out[r, c] /= total
    return out


@njit(cache=True)
def _nb_matvec(weights, vec):
    rows, cols = weights.shape
    out = np.empty(rows, dtype=np.float64)
    for r in range(rows):
        acc = 0.0
        for c in range(cols):
            acc += weights[r, c] * vec[c]
        out[r] = acc
    return out


@njit(cache=True)
def _nb_batch_logits(features, weights):
    # np.dot inside nopython mode dispatches to BLAS, same as the numpy path
    return np.dot(features, weights.T)


@njit(cache=True)
def _nb_count_strictly_less(values, x):
    count = 0
    for i in range(values.shape[0]):
        if values[i] < x:
            count += 1
    return count


@njit(cache=True)
def _nb_sgd_step(weights, features, labels, lr):
    n = features.shape[0]
    logits = _nb_batch_logits(features, weights)
    probs = _nb_row_softmax(logits)
    scale = lr / n
    for i in range(n):
        probs[i, labels[i]] -= 1.0
    grad = np.dot(probs.T.copy(), features)
    weights -= scale * grad
    return weights


@njit(cache=True)
def _nb_correct_count(weights, features, labels):
    logits = _nb_batch_logits(features, weights)
    n, c = logits.shape
    count = 0
    for i in range(n):
        best = 0
        for j in range(1, c):
            if logits[i, j] > logits[i, best]:
                best = j
        if best == labels[i]:
            count += 1
    return count


def _nb_sgd_step_inplace(weights, features, labels, lr):
    _nb_sgd_step(weights, features, labels, lr)


USING_NUMBA = NUMBA_AVAILABLE and _numba_requested()

if USING_NUMBA:
    softmax = _nb_softmax
    row_softmax = _nb_row_softmax
    matvec = _nb_matvec
    batch_logits = _nb_batch_logits
    count_strictly_less = _nb_count_strictly_less
    sgd_step = _nb_sgd_step_inplace
    correct_count = _nb_correct_count
else:
    softmax = _np_softmax
    row_softmax = _np_row_softmax
    matvec = _np_matvec
    batch_logits = _np_batch_logits
    count_strictly_less = _np_count_strictly_less
    sgd_step = _np_sgd_step
    correct_count = _np_correct_count


def warmup():
    """Force JIT compilation of every active kernel on tiny inputs.

    No-op on the numpy path. Call before timing anything.
    """
    w = np.zeros((2, 3))
    phi = np.zeros((2, 3))
    labels = np.zeros(2, dtype=np.int64)
    softmax(np.zeros(2))
    row_softmax(np.zeros((2, 2)))
    matvec(w, np.zeros(3))
    batch_logits(phi, w)
    count_strictly_less(np.zeros(1), 0.0)
    sgd_step(w.copy(), phi, labels, 0.1)
    correct_count(w, phi, labels)
