"""Data sources: synthetic Gaussian streams, embedding files, splits.

A source exposes one-at-a-time sampling over a finite materialized pool
with an exclusion set (already-selected ids are never redrawn), plus
held-out validation and test sets. The synthetic source draws per-class
Gaussian clusters with optional power-law class imbalance and label
noise; real embeddings enter through the PKEM binary format or its CSV
twin.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

PKEM_MAGIC = b"PKEM"
PKEM_VERSION = 1
CLEAN_UNKNOWN = 0xFFFFFFFF


class EmbeddingFormatError(ValueError):
    """Base for embedding-file parse failures."""


class BadMagicError(EmbeddingFormatError):
    pass


class TruncatedPayloadError(EmbeddingFormatError):
    pass


class LabelRangeError(EmbeddingFormatError):
    pass


class NonFiniteFeatureError(EmbeddingFormatError):
    pass


@dataclass
class Example:
    """One identified candidate: features plus a possibly noisy label.

    ``clean_label`` is diagnostic ground truth for noise audits only; the
    engine itself never reads it.
    """

    id: int
    features: np.ndarray
    label: int
    clean_label: int | None = None


@dataclass
class Dataset:
    """Columnar store: ids, (n, d) features, labels, optional clean labels.

    ``clean_labels`` uses -1 for unknown.
    """

    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    clean_labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        n = self.ids.shape[0]
        if self.features.shape[0] != n or self.labels.shape[0] != n:
            raise ValueError("column lengths disagree")
        if self.clean_labels.shape[0] != n:
            raise ValueError("column lengths disagree")
        if len(np.unique(self.ids)) != n:
            raise ValueError("example ids must be unique")

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def example(self, row: int) -> Example:
        clean = int(self.clean_labels[row])
        return Example(
            id=int(self.ids[row]),
            features=self.features[row],
            label=int(self.labels[row]),
            clean_label=None if clean < 0 else clean,
        )

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            ids=self.ids[rows].copy(),
            features=self.features[rows].copy(),
            labels=self.labels[rows].copy(),
            clean_labels=self.clean_labels[rows].copy(),
            num_classes=self.num_classes,
        )


@dataclass
class SyntheticSourceSpec:
    """Recipe for a noisy, possibly imbalanced Gaussian mixture stream.

    Class means are unit-norm directions drawn once from the seed and
    scaled by ``separation``; examples scatter around their true class
    mean with isotropic ``cluster_spread``. ``label_noise_rate`` flips a
    label to a uniformly random *other* class (features stay with the true
    cluster). ``power_law_alpha`` > 0 skews class frequencies as
    p_c ∝ (c+1)^-alpha; 0 keeps them uniform. Validation and test sets are
    clean and class-balanced.
    """

    num_classes: int = 20
    feature_dim: int = 32
    pool_size: int = 20000
    power_law_alpha: float = 0.0
    cluster_spread: float = 2.0
    separation: float = 12.0
    label_noise_rate: float = 0.0
    seed: int = 0
    val_per_class: int = 20
    test_per_class: int = 50

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if not (0.0 <= self.label_noise_rate < 1.0):
            raise ValueError("label_noise_rate must be in [0, 1)")
        if self.power_law_alpha < 0.0:
            raise ValueError("power_law_alpha must be >= 0")

    def class_prior(self) -> np.ndarray:
        weights = (np.arange(self.num_classes) + 1.0) ** (-self.power_law_alpha)
        return weights / weights.sum()


class PoolSource:
    """Finite pool with uniform draws over the complement of an exclusion set.

    Removal uses swap-with-last over an index array, so draws stay O(1)
    even when most of the pool is excluded (no rejection loops).
    """

    def __init__(self, pool: Dataset, validation: Dataset | None, test: Dataset | None):
        self.pool = pool
        self.validation = validation
        self.test = test
        self._avail_rows = np.arange(len(pool), dtype=np.int64)
        self._avail_count = len(pool)
        self._row_pos = {int(pool.ids[r]): r for r in range(len(pool))}
        self._pos_of_row = np.arange(len(pool), dtype=np.int64)
        self._removed: set[int] = set()

    @property
    def total_size(self) -> int:
        return len(self.pool)

    @property
    def remaining(self) -> int:
        return self._avail_count

    def _remove_id(self, example_id: int) -> None:
        row = self._row_pos.get(int(example_id))
        if row is None:
            return
        pos = self._pos_of_row[row]
        if pos >= self._avail_count:
            return
        last = self._avail_count - 1
        moved = self._avail_rows[last]
        self._avail_rows[pos] = moved
        self._pos_of_row[moved] = pos
        self._avail_rows[last] = row
        self._pos_of_row[row] = last
        self._avail_count -= 1

    def _sync_exclusions(self, excluded, force: bool = False) -> None:
        # exclusions are cumulative: ids stay removed even if a caller later
        # passes a smaller set
        if not force and len(excluded) == len(self._removed):
            return
        for example_id in excluded:
            if example_id not in self._removed:
                self._removed.add(example_id)
                self._remove_id(example_id)

    def draw_excluding(self, excluded, rng: np.random.Generator) -> Example | None:
        """Uniform draw over pool ids not in ``excluded``; None if exhausted."""
        self._sync_exclusions(excluded)
        if self._avail_count == 0:
            return None
        pos = int(rng.integers(self._avail_count))
        ex = self.pool.example(int(self._avail_rows[pos]))
        if ex.id in excluded:
            # caller swapped set members without changing size; resync fully
            self._sync_exclusions(excluded, force=True)
            return self.draw_excluding(excluded, rng)
        return ex

    def draw_rows_excluding(
        self, excluded, rng: np.random.Generator, count: int
    ) -> np.ndarray:
        """Up to ``count`` distinct pool rows outside ``excluded``.

        Fewer rows (possibly zero) come back when the complement is small;
        order is random and draw-order deterministic for a given rng state.
        """
        self._sync_exclusions(excluded)
        take = min(count, self._avail_count)
        if take == 0:
            return np.empty(0, dtype=np.int64)
        picked = np.empty(take, dtype=np.int64)
        # floating partial Fisher-Yates over the live prefix
        for i in range(take):
            j = i + int(rng.integers(self._avail_count - i))
            self._avail_rows[i], self._avail_rows[j] = (
                self._avail_rows[j],
                self._avail_rows[i],
            )
            self._pos_of_row[self._avail_rows[i]] = i
            self._pos_of_row[self._avail_rows[j]] = j
            picked[i] = self._avail_rows[i]
        if any(int(self.pool.ids[r]) in excluded for r in picked):
            self._sync_exclusions(excluded, force=True)
            return self.draw_rows_excluding(excluded, rng, count)
        return picked


def draw_excluding(
    source: PoolSource, excluded, rng: np.random.Generator
) -> Example | None:
    """Module-level alias for :meth:`PoolSource.draw_excluding`."""
    return source.draw_excluding(excluded, rng)


def _sample_cluster(
    rng: np.random.Generator,
    means: np.ndarray,
    labels: np.ndarray,
    spread: float,
) -> np.ndarray:
    d = means.shape[1]
    return means[labels] + spread * rng.standard_normal((labels.size, d))


def synth_build(spec: SyntheticSourceSpec) -> PoolSource:
    """Materialize the pool plus clean, class-balanced validation/test sets.

    Deterministic for a fixed seed: every array is a pure function of the
    spec. Pool ids are 0..n-1; validation and test ids continue the range.
    """
    rng = np.random.default_rng(spec.seed)
    c, d, n = spec.num_classes, spec.feature_dim, spec.pool_size

    raw = rng.standard_normal((c, d))
    means = spec.separation * raw / np.linalg.norm(raw, axis=1, keepdims=True)

    clean = rng.choice(c, size=n, p=spec.class_prior()).astype(np.int64)
    features = _sample_cluster(rng, means, clean, spec.cluster_spread)

    labels = clean.copy()
    if spec.label_noise_rate > 0.0:
        flip = rng.random(n) < spec.label_noise_rate
        offsets = rng.integers(1, c, size=n)
        labels[flip] = (clean[flip] + offsets[flip]) % c

    pool = Dataset(
        ids=np.arange(n, dtype=np.int64),
        features=features,
        labels=labels,
        clean_labels=clean.copy(),
        num_classes=c,
    )

    def held_out(start_id: int, per_class: int) -> Dataset:
        y = np.repeat(np.arange(c, dtype=np.int64), per_class)
        phi = _sample_cluster(rng, means, y, spec.cluster_spread)
        count = y.size
        return Dataset(
            ids=np.arange(start_id, start_id + count, dtype=np.int64),
            features=phi,
            labels=y,
            clean_labels=y.copy(),
            num_classes=c,
        )

    validation = held_out(n, spec.val_per_class)
    test = held_out(n + len(validation), spec.test_per_class)
    return PoolSource(pool, validation, test)


def split(
    dataset: Dataset, fractions: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint (pool, validation, test) split by seeded shuffle.

    Validation and test sizes are floors of their fractions; the pool
    absorbs the remainder.
    """
    f_pool, f_val, f_test = fractions
    if min(fractions) < 0 or f_pool + f_val + f_test > 1.0 + 1e-9:
        raise ValueError("fractions must be non-negative and sum to at most 1")
    n = len(dataset)
    n_val = int(n * f_val)
    n_test = int(n * f_test)
    perm = np.random.default_rng(seed).permutation(n)
    val_rows = perm[:n_val]
    test_rows = perm[n_val : n_val + n_test]
    pool_rows = perm[n_val + n_test :]
    return dataset.subset(pool_rows), dataset.subset(val_rows), dataset.subset(test_rows)


# ---------------------------------------------------------------------------
# PKEM embedding files
# ---------------------------------------------------------------------------


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype(
        [("id", "<u8"), ("label", "<u4"), ("clean", "<u4"), ("features", "<f4", (dim,))]
    )


def write_embeddings(dataset: Dataset, path) -> None:
    """Write the binary PKEM format (features stored as float32)."""
    n, d = len(dataset), dataset.feature_dim
    records = np.empty(n, dtype=_record_dtype(d))
    records["id"] = dataset.ids.astype(np.uint64)
    records["label"] = dataset.labels.astype(np.uint32)
    clean = dataset.clean_labels.copy()
    records["clean"] = np.where(clean < 0, CLEAN_UNKNOWN, clean).astype(np.uint32)
    records["features"] = dataset.features.astype(np.float32)
    header = PKEM_MAGIC + struct.pack("<IIII", PKEM_VERSION, n, d, dataset.num_classes)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def write_embeddings_csv(dataset: Dataset, path) -> None:
    """CSV twin of the PKEM format; empty clean_label means unknown."""
    d = dataset.feature_dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "clean_label"] + [f"f{i}" for i in range(d)])
        for row in range(len(dataset)):
            clean = int(dataset.clean_labels[row])
            writer.writerow(
                [int(dataset.ids[row]), int(dataset.labels[row]), "" if clean < 0 else clean]
                + [repr(float(v)) for v in dataset.features[row]]
            )


def _load_pkem_binary(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:4] != PKEM_MAGIC:
        raise BadMagicError(f"{path}: not a PKEM file")
    version, n, d, c = struct.unpack("<IIII", blob[4:20])
    if version != PKEM_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported PKEM version {version}")
    dtype = _record_dtype(d)
    body = blob[20:]
    if len(body) != n * dtype.itemsize:
        raise TruncatedPayloadError(
            f"{path}: payload is {len(body)} bytes, expected {n * dtype.itemsize}"
        )
    records = np.frombuffer(body, dtype=dtype)
    labels = records["label"].astype(np.int64)
    if n and labels.max(initial=0) >= c:
        raise LabelRangeError(f"{path}: label {labels.max()} >= num_classes {c}")
    clean = records["clean"].astype(np.int64)
    clean[records["clean"] == CLEAN_UNKNOWN] = -1
    if np.any(clean >= c):
        raise LabelRangeError(f"{path}: clean_label out of range")
    features = records["features"].astype(np.float64)
    if not np.all(np.isfinite(features)):
        raise NonFiniteFeatureError(f"{path}: non-finite feature values")
    return Dataset(
        ids=records["id"].astype(np.int64),
        features=features,
        labels=labels,
        clean_labels=clean,
        num_classes=int(c),
    )


def _load_pkem_csv(path) -> Dataset:
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TruncatedPayloadError(f"{path}: empty CSV") from None
        if header[:3] != ["id", "label", "clean_label"]:
            raise BadMagicError(f"{path}: unexpected CSV header {header[:3]}")
        d = len(header) - 3
        if d < 1 or header[3:] != [f"f{i}" for i in range(d)]:
            raise BadMagicError(f"{path}: malformed feature columns")
        ids, labels, cleans, feats = [], [], [], []
        for line, row in enumerate(reader, start=2):
            if len(row) != 3 + d:
                raise TruncatedPayloadError(f"{path}:{line}: expected {3 + d} fields")
            ids.append(int(row[0]))
            labels.append(int(row[1]))
            cleans.append(-1 if row[2] == "" else int(row[2]))
            feats.append([float(v) for v in row[3:]])
    features = np.asarray(feats, dtype=np.float64).reshape(len(ids), d)
    if not np.all(np.isfinite(features)):
        raise NonFiniteFeatureError(f"{path}: non-finite feature values")
    labels_arr = np.asarray(labels, dtype=np.int64)
    clean_arr = np.asarray(cleans, dtype=np.int64)
    num_classes = int(max(labels_arr.max(initial=0), clean_arr.max(initial=0)) + 1)
    return Dataset(
        ids=np.asarray(ids, dtype=np.int64),
        features=features,
        labels=labels_arr,
        clean_labels=clean_arr,
        num_classes=num_classes,
    )


def load_embeddings(path) -> Dataset:
    """Parse a PKEM file; ``.csv`` paths use the CSV schema.

    The CSV carries no class-count header, so its num_classes is inferred
    from the largest label seen.
    """
    if str(path).endswith(".csv"):
        return _load_pkem_csv(path)
    return _load_pkem_binary(path)
