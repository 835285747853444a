"""Linear-softmax classifier trained on its readout weights only.

The model is a single weight matrix W with one row per class; logits are
W @ phi(x) with no bias term (append a constant-1 feature if you need one).
Keeping the layer linear makes the one-step logit-change analysis in
:mod:`idslab.scoring` exact rather than a first-order approximation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels

CHECKPOINT_MAGIC = b"PKWT"
CHECKPOINT_VERSION = 1

_PROB_FLOOR = 1e-12


@dataclass
class Prediction:
    logits: np.ndarray
    probs: np.ndarray


class LinearSoftmaxModel:
    """Trainable readout: weights of shape (num_classes, feature_dim)."""

    def __init__(self, weights: np.ndarray):
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {weights.shape}")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        self.weights = weights

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LinearSoftmaxModel":
        return LinearSoftmaxModel(self.weights.copy())

    def _check_features(self, features: np.ndarray, dim_axis: int = -1) -> None:
        if features.shape[dim_axis] != self.feature_dim:
            raise ValueError(
                f"feature dim {features.shape[dim_axis]} != model dim {self.feature_dim}"
            )

    def forward(self, features) -> Prediction:
        """Logits and softmax probabilities for a single feature vector."""
        phi = np.ascontiguousarray(features, dtype=np.float64)
        if phi.ndim != 1:
            raise ValueError("forward expects a single feature vector")
        self._check_features(phi)
        logits = kernels.matvec(self.weights, phi)
        return Prediction(logits=logits, probs=kernels.softmax(logits))

    def forward_batch(self, features) -> tuple[np.ndarray, np.ndarray]:
        """Row-wise logits and probabilities for a feature matrix (n, d)."""
        phi = np.ascontiguousarray(features, dtype=np.float64)
        if phi.ndim != 2:
            raise ValueError("forward_batch expects a 2-D feature matrix")
        self._check_features(phi)
        logits = kernels.batch_logits(phi, self.weights)
        return logits, kernels.row_softmax(logits)

    def sgd_batch_update(self, features, labels, lr: float) -> None:
        """One SGD step on the mean cross-entropy over the batch.

        W <- W - (lr/n) * sum_i (softmax(W phi_i) - onehot(y_i)) phi_i^T,
        with all probabilities evaluated at the pre-update weights.
        """
        if lr <= 0.0:
            raise ValueError("lr must be positive")
        phi = np.ascontiguousarray(features, dtype=np.float64)
        y = np.ascontiguousarray(labels, dtype=np.int64)
        if phi.ndim != 2 or phi.shape[0] == 0:
            raise ValueError("batch must be a non-empty 2-D feature matrix")
        if y.shape != (phi.shape[0],):
            raise ValueError("labels must align with the batch rows")
        self._check_features(phi)
        if np.any(y < 0) or np.any(y >= self.num_classes):
            raise ValueError("label out of range")
        kernels.sgd_step(self.weights, phi, y, float(lr))

    def save(self, path) -> None:
        """Write the flat binary checkpoint (PKWT, little-endian)."""
        header = CHECKPOINT_MAGIC + struct.pack(
            "<III", CHECKPOINT_VERSION, self.num_classes, self.feature_dim
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.weights.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "LinearSoftmaxModel":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != CHECKPOINT_MAGIC:
            raise ValueError("not a model checkpoint (bad magic)")
        version, classes, dim = struct.unpack("<III", blob[4:16])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        body = blob[16:]
        expected = classes * dim * 8
        if len(body) != expected:
            raise ValueError(
                f"checkpoint payload is {len(body)} bytes, expected {expected}"
            )
        weights = np.frombuffer(body, dtype="<f8").reshape(classes, dim)
        return cls(weights.copy())


def init_model(
    num_classes: int, feature_dim: int, seed: int = 0, scheme: str = "zeros"
) -> LinearSoftmaxModel:
    """Fresh model: all-zero weights (default) or seeded Gaussian(0, 0.01).

    Zero init makes the initial probabilities uniform, so the initial
    prediction error is the known constant 2(1 - 1/C).
    """
    if num_classes < 2 or feature_dim < 1:
        raise ValueError("need at least two classes and one feature")
    if scheme == "zeros":
        weights = np.zeros((num_classes, feature_dim))
    elif scheme == "gaussian":
        rng = np.random.default_rng(seed)
        weights = rng.normal(0.0, 0.01, size=(num_classes, feature_dim))
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return LinearSoftmaxModel(weights)


def prediction_error(probs, label: int) -> float:
    """Mass of the output-gradient: (1 - p[y]) + sum_{i != y} p[i].

    Equal to 2(1 - p[y]) for any proper probability vector; ranges over
    [0, 2] and vanishes exactly when the model is fully confident and
    correct.
    """
    p = np.asarray(probs, dtype=np.float64)
    if label < 0 or label >= p.size:
        raise ValueError(f"label {label} out of range for {p.size} classes")
    return float((1.0 - p[label]) + (p.sum() - p[label]))


def cross_entropy(probs, label: int) -> float:
    """Negative log-probability of the label, clamped at 1e-12."""
    p = np.asarray(probs, dtype=np.float64)
    if label < 0 or label >= p.size:
        raise ValueError(f"label {label} out of range for {p.size} classes")
    return float(-np.log(max(p[label], _PROB_FLOOR)))


def evaluate_accuracy(model: LinearSoftmaxModel, features, labels) -> float:
    """Fraction of argmax-correct predictions; argmax ties break low.

    An empty dataset has no defined accuracy and raises.
    """
    phi = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if phi.ndim != 2 or phi.shape[0] == 0:
        raise ValueError("cannot evaluate accuracy on an empty dataset")
    if y.shape != (phi.shape[0],):
        raise ValueError("labels must align with the dataset rows")
    return kernels.correct_count(model.weights, phi, y) / phi.shape[0]
