"""Acquisition scores for streamed candidates.

The centerpiece is the product score: prediction error times feature
similarity to the candidate's class prototype. Two prototype choices give
two variants — the per-class mean of held-out validation embeddings, or
the model's own readout weight row (whose inner product with phi is just
the class logit). ``score_exact_delta`` is the reference form: the mean
one-step change it induces in same-class validation logits, which for a
linear readout factors exactly into the product score.

The remaining functions are the standard streaming baselines (error norm,
last-layer gradient norm, least confidence, wrong-and-low-confidence, and
cosine-to-prototype with easy/moderate/hard acceptance bands).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .model import LinearSoftmaxModel, prediction_error
from .numerics import cosine_similarity


class AcquisitionMethod(str, Enum):
    RANDOM = "random"
    EXACT_DELTA = "exact_delta"
    PEAKS_V = "peaks_v"
    PEAKS = "peaks"
    EL2N = "el2n"
    GRAND = "grand"
    UNCERTAINTY = "uncertainty"
    WRONG_LOW_CONF = "wrong_low_conf"
    EASY_EMB = "easy_emb"
    MODERATE_EMB = "moderate_emb"
    HARD_EMB = "hard_emb"


class PrototypeSource(str, Enum):
    VALIDATION_MEANS = "validation_means"
    READOUT_WEIGHTS = "readout_weights"


# methods whose score is divided by the per-class selected count by default
_CLASS_NORMALIZED_BY_DEFAULT = {
    AcquisitionMethod.EXACT_DELTA,
    AcquisitionMethod.PEAKS_V,
    AcquisitionMethod.PEAKS,
}

# methods that need per-class validation statistics
_NEEDS_VALIDATION = {AcquisitionMethod.EXACT_DELTA, AcquisitionMethod.PEAKS_V}

_EMBEDDING_METHODS = {
    AcquisitionMethod.EASY_EMB,
    AcquisitionMethod.MODERATE_EMB,
    AcquisitionMethod.HARD_EMB,
}


@dataclass(frozen=True)
class MethodConfig:
    """A fully resolved acquisition method.

    ``normalize_by_class_count`` defaults to the product-score family's
    convention (on for exact_delta / peaks_v / peaks, off elsewhere).
    ``prototype_source`` only matters for the embedding methods; peaks_v
    and exact_delta always use validation statistics.
    """

    method: AcquisitionMethod
    normalize_by_class_count: bool | None = None
    prototype_source: PrototypeSource = PrototypeSource.VALIDATION_MEANS

    def resolved_normalize(self) -> bool:
        if self.normalize_by_class_count is None:
            return self.method in _CLASS_NORMALIZED_BY_DEFAULT
        return self.normalize_by_class_count

    def needs_validation(self) -> bool:
        if self.method in _NEEDS_VALIDATION:
            return True
        return (
            self.method in _EMBEDDING_METHODS
            and self.prototype_source is PrototypeSource.VALIDATION_MEANS
        )


@dataclass
class ClassPrototypes:
    """Per-class mean validation embeddings, plus the raw per-class lists.

    The raw lists back the exact-delta score; the means back everything
    else. Classes absent from the validation set have no entry.
    """

    means: dict[int, np.ndarray] = field(default_factory=dict)
    members: dict[int, np.ndarray] = field(default_factory=dict)

    def mean_for(self, label: int) -> np.ndarray:
        if label not in self.means:
            raise ValueError(f"no validation prototype for class {label}")
        return self.means[label]

    def members_for(self, label: int) -> np.ndarray:
        if label not in self.members:
            raise ValueError(f"no validation examples for class {label}")
        return self.members[label]


def compute_prototypes(features, labels) -> ClassPrototypes:
    """Arithmetic per-class means of a validation set (n, d)."""
    phi = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if phi.ndim != 2 or y.shape != (phi.shape[0],):
        raise ValueError("expected an (n, d) feature matrix with n labels")
    protos = ClassPrototypes()
    for label in np.unique(y):
        rows = phi[y == label]
        protos.members[int(label)] = rows
        protos.means[int(label)] = rows.mean(axis=0)
    return protos


def exact_logit_delta(
    model: LinearSoftmaxModel, phi_p, y_p: int, phi_v
) -> np.ndarray:
    """Per-class logit change a probe point sees after one step on (phi_p, y_p).

    For the linear readout the kernel between two inputs is diagonal with
    entry <phi_v, phi_p>, so out[i] = <phi_v, phi_p> * (onehot(y_p)[i] -
    p[i]). The learning rate is deliberately omitted; multiplying by lr
    gives the measured post-step change exactly.
    """
    phi_p = np.ascontiguousarray(phi_p, dtype=np.float64)
    phi_v = np.ascontiguousarray(phi_v, dtype=np.float64)
    if phi_p.shape != phi_v.shape:
        raise ValueError("candidate and probe feature dims differ")
    probs = model.forward(phi_p).probs
    if y_p < 0 or y_p >= model.num_classes:
        raise ValueError(f"label {y_p} out of range")
    delta = -probs
    delta[y_p] += 1.0
    return float(phi_v @ phi_p) * delta


def score_exact_delta(
    model: LinearSoftmaxModel, phi_p, y_p: int, prototypes: ClassPrototypes
) -> float:
    """Mean net logit improvement over the candidate's validation class.

    For each validation example of class y_p, credit the change in the
    true-class logit and debit the change in every other logit; average
    the result over the class. Computed probe by probe through the
    per-class logit deltas; algebraically this collapses to
    ``score_peaks_v``, and the two are cross-checked in the test suite.
    """
    members = prototypes.members_for(int(y_p))
    phi_p = np.ascontiguousarray(phi_p, dtype=np.float64)
    y_p = int(y_p)
    probs = model.forward(phi_p).probs
    base = -probs
    base[y_p] += 1.0
    total = 0.0
    for phi_v in members:
        delta = float(phi_v @ phi_p) * base
        total += delta[y_p] - (delta.sum() - delta[y_p])
    return total / len(members)


def score_peaks_v(
    model: LinearSoftmaxModel, phi_p, y_p: int, prototypes: ClassPrototypes
) -> float:
    """Prediction error times similarity to the validation class mean."""
    phi_p = np.ascontiguousarray(phi_p, dtype=np.float64)
    probs = model.forward(phi_p).probs
    err = prediction_error(probs, int(y_p))
    return float(err * (phi_p @ prototypes.mean_for(int(y_p))))


def score_peaks(model: LinearSoftmaxModel, phi_p, y_p: int) -> float:
    """Prediction error times the true-class logit.

    The readout row for class y acts as a learned prototype, so the logit
    <W[y], phi> replaces the validation-mean inner product.
    """
    phi_p = np.ascontiguousarray(phi_p, dtype=np.float64)
    pred = model.forward(phi_p)
    err = prediction_error(pred.probs, int(y_p))
    return float(err * pred.logits[int(y_p)])


def score_el2n(probs, y_p: int) -> float:
    """L2 norm of (probabilities - onehot label); ranges [0, sqrt(2)]."""
    p = np.asarray(probs, dtype=np.float64).copy()
    if y_p < 0 or y_p >= p.size:
        raise ValueError(f"label {y_p} out of range")
    p[y_p] -= 1.0
    return float(np.linalg.norm(p))


def score_grand(probs, y_p: int, phi_p) -> float:
    """Frobenius norm of the readout gradient (probs - y) phi^T.

    The gradient is rank one, so the norm factors into
    ||probs - onehot|| * ||phi||.
    """
    phi = np.asarray(phi_p, dtype=np.float64)
    return score_el2n(probs, y_p) * float(np.linalg.norm(phi))


def score_uncertainty(probs) -> float:
    """Least-confidence score 1 - max(probs); label-free."""
    p = np.asarray(probs, dtype=np.float64)
    return float(1.0 - p.max())


def score_wrong_low_conf(probs, y_p: int) -> float:
    """0 for correctly predicted candidates, else 1 - max(probs).

    A confidently wrong prediction also scores ~0: the rule targets
    wrong-but-unsure examples, not all mistakes.
    """
    p = np.asarray(probs, dtype=np.float64)
    if y_p < 0 or y_p >= p.size:
        raise ValueError(f"label {y_p} out of range")
    if int(np.argmax(p)) == int(y_p):
        return 0.0
    return float(1.0 - p.max())


def score_embedding(phi_p, prototype) -> float:
    """Cosine similarity to the class prototype vector.

    Shared by the easy/moderate/hard variants, which differ only in which
    percentile band the selection rule accepts.
    """
    return cosine_similarity(phi_p, prototype)


def normalize_by_class_count(score: float, class_count: int) -> float:
    """Divide by the number already selected from the class (floor 1).

    Damps scores of crowded classes so selection cannot run away with a
    few easy classes; a count of zero divides by one so the first example
    of a class is not infinitely boosted.
    """
    return score / max(int(class_count), 1)


def embedding_prototype(
    spec: MethodConfig,
    model: LinearSoftmaxModel,
    y_p: int,
    prototypes: ClassPrototypes | None,
) -> np.ndarray:
    """Prototype vector for the embedding methods, per the configured source."""
    if spec.prototype_source is PrototypeSource.READOUT_WEIGHTS:
        return model.weights[int(y_p)]
    if prototypes is None:
        raise ValueError(f"{spec.method.value} needs a validation set")
    return prototypes.mean_for(int(y_p))


def score_candidate(
    spec: MethodConfig,
    model: LinearSoftmaxModel,
    phi_p: np.ndarray,
    y_p: int,
    probs: np.ndarray,
    logits: np.ndarray,
    prototypes: ClassPrototypes | None,
    class_counts: np.ndarray,
    rng: np.random.Generator,
) -> float:
    """Raw score for one candidate under ``spec``.

    ``probs``/``logits`` are the candidate's precomputed forward pass (the
    harness evaluates candidate batches together). Class-count
    normalization is applied here when the method config enables it.
    Random is the only method that touches ``rng``.
    """
    method = spec.method
    if method is AcquisitionMethod.RANDOM:
        score = float(rng.random())
    elif method is AcquisitionMethod.EXACT_DELTA:
        if prototypes is None:
            raise ValueError("exact_delta needs a validation set")
        score = score_exact_delta(model, phi_p, y_p, prototypes)
    elif method is AcquisitionMethod.PEAKS_V:
        if prototypes is None:
            raise ValueError("peaks_v needs a validation set")
        err = prediction_error(probs, int(y_p))
        score = float(err * (phi_p @ prototypes.mean_for(int(y_p))))
    elif method is AcquisitionMethod.PEAKS:
        err = prediction_error(probs, int(y_p))
        score = float(err * logits[int(y_p)])
    elif method is AcquisitionMethod.EL2N:
        score = score_el2n(probs, y_p)
    elif method is AcquisitionMethod.GRAND:
        score = score_grand(probs, y_p, phi_p)
    elif method is AcquisitionMethod.UNCERTAINTY:
        score = score_uncertainty(probs)
    elif method is AcquisitionMethod.WRONG_LOW_CONF:
        score = score_wrong_low_conf(probs, y_p)
    elif method in _EMBEDDING_METHODS:
        score = score_embedding(phi_p, embedding_prototype(spec, model, y_p, prototypes))
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unhandled method {method}")
    if spec.resolved_normalize():
        score = normalize_by_class_count(score, int(class_counts[int(y_p)]))
    return score
