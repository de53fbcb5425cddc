"""Synthetic long-tailed datasets, re-balancing samplers, and dataset files.

Training splits follow a head-to-tail profile (exponential decay between a
head count and head/rho, or a rank power law); the test split is balanced so
accuracy comparisons across classes are fair. Features are Gaussian clusters
around unit-norm mean directions.

Classes are bucketed by training count into many (> 100), medium (20 to 100,
both ends inclusive) and few (< 20) shot groups.

Dataset file layout (all integers little-endian):

    magic          4 bytes  b"LTDS"
    version        u32      currently 1
    n_total        u64      train rows + test rows
    feature_dim    u32
    num_classes    u32
    train_counts   K x u64
    test_per_class u64      test split is balanced, one count suffices
    rows           n_total records: label u32, then feature_dim x f64
                   (train rows first, then test rows)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    DatasetFormatError,
    InvalidPowerError,
    InvalidRatioError,
)

MAGIC = b"LTDS"
VERSION = 1

SHOT_MANY = "many"
SHOT_MEDIUM = "medium"
SHOT_FEW = "few"
MANY_THRESHOLD = 100  # strictly above is many-shot
FEW_THRESHOLD = 20  # strictly below is few-shot

STRATEGIES = ("instance", "class_balanced", "square_root", "mix_balanced")


def exponential_counts(num_classes: int, n_max: int, rho: float) -> np.ndarray:
    """n_j = round(n_max * rho^(-(j-1)/(K-1))), clamped to at least 1."""
    if num_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {num_classes}")
    if n_max < 1:
        raise ConfigurationError(f"n_max must be >= 1, got {n_max}")
    if rho < 1.0:
        raise InvalidRatioError(f"imbalance ratio must be >= 1, got {rho}")
    j = np.arange(num_classes, dtype=np.float64)
    raw = n_max * rho ** (-j / (num_classes - 1))
    return np.maximum(np.rint(raw), 1.0).astype(np.int64)


def pareto_counts(num_classes: int, n_max: int, alpha: float) -> np.ndarray:
    """Rank power law n_j = round(n_max * j^(-1/alpha)), clamped to at least 1.

    j = 1 gives exactly n_max, and the sequence is non-increasing in rank.
    """
    if num_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {num_classes}")
    if n_max < 1:
        raise ConfigurationError(f"n_max must be >= 1, got {n_max}")
    if alpha <= 0.0:
        raise InvalidPowerError(f"power must be > 0, got {alpha}")
    j = np.arange(1, num_classes + 1, dtype=np.float64)
    raw = n_max * j ** (-1.0 / alpha)
    return np.maximum(np.rint(raw), 1.0).astype(np.int64)


def shot_split(class_counts) -> list[str]:
    """Bucket each class by its training count."""
    tags = []
    for c in np.asarray(class_counts):
        if c > MANY_THRESHOLD:
            tags.append(SHOT_MANY)
        elif c < FEW_THRESHOLD:
            tags.append(SHOT_FEW)
        else:
            tags.append(SHOT_MEDIUM)
    return tags


@dataclass(eq=False)
class LongTailedDataset:
    """Feature rows with a long-tailed train split and a balanced test split.

    Rows are laid out train-first, each split grouped by class in id order.
    class_means/noise_sigma carry synthesis metadata for warm-start pools;
    they are not part of the file format and are None for ingested data.
    """

    features: np.ndarray  # n_total x feature_dim, float64
    labels: np.ndarray  # n_total, int64
    class_counts: np.ndarray  # K train counts
    test_per_class: int
    class_means: np.ndarray | None = None
    noise_sigma: float | None = None
    _train_index: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_counts = np.asarray(self.class_counts, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ConfigurationError("features must be 2-d with a flat label array")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ConfigurationError(
                f"{self.features.shape[0]} rows vs {self.labels.shape[0]} labels")
        expected = int(self.class_counts.sum()) + self.num_classes * self.test_per_class
        if self.features.shape[0] != expected:
            raise ConfigurationError(
                f"row count {self.features.shape[0]} does not match counts ({expected})")
        train_labels = self.labels[:self.n_train]
        hist = np.bincount(train_labels, minlength=self.num_classes)
        if not np.array_equal(hist, self.class_counts):
            raise ConfigurationError(
                f"train labels disagree with class counts: {hist.tolist()} "
                f"vs {self.class_counts.tolist()}")
        self._train_index = [np.flatnonzero(train_labels == k)
                             for k in range(self.num_classes)]

    @property
    def num_classes(self) -> int:
        return self.class_counts.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_train(self) -> int:
        return int(self.class_counts.sum())

    @property
    def n_test(self) -> int:
        return self.num_classes * self.test_per_class

    @property
    def train_features(self) -> np.ndarray:
        return self.features[:self.n_train]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[:self.n_train]

    @property
    def test_features(self) -> np.ndarray:
        return self.features[self.n_train:]

    @property
    def test_labels(self) -> np.ndarray:
        return self.labels[self.n_train:]

    def shot_split(self) -> list[str]:
        return shot_split(self.class_counts)

    def train_rows_for_class(self, class_id: int) -> np.ndarray:
        return self._train_index[class_id]

    def empirical_class_means(self) -> np.ndarray:
        means = np.zeros((self.num_classes, self.feature_dim))
        for k in range(self.num_classes):
            means[k] = self.train_features[self._train_index[k]].mean(axis=0)
        return means


def _synth_from_counts(counts: np.ndarray, feature_dim: int, seed: int,
                       sigma: float, test_per_class: int) -> LongTailedDataset:
    if sigma < 0.0:
        raise ConfigurationError(f"sigma must be >= 0, got {sigma}")
    if test_per_class < 1:
        raise ConfigurationError(f"test_per_class must be >= 1, got {test_per_class}")
    rng = np.random.default_rng(seed)
    k = counts.shape[0]
    means = rng.normal(size=(k, feature_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)

    feats, labels = [], []
    for cls in range(k):  # train rows, grouped by class
        n = int(counts[cls])
        feats.append(means[cls] + sigma * rng.normal(size=(n, feature_dim)))
        labels.append(np.full(n, cls, dtype=np.int64))
    for cls in range(k):  # balanced test rows, fresh noise
        feats.append(means[cls] + sigma * rng.normal(size=(test_per_class, feature_dim)))
        labels.append(np.full(test_per_class, cls, dtype=np.int64))

    return LongTailedDataset(np.concatenate(feats), np.concatenate(labels),
                             counts, test_per_class,
                             class_means=means, noise_sigma=sigma)


def synth_exponential(num_classes: int, n_max: int, rho: float, feature_dim: int,
                      seed: int, sigma: float = 0.35,
                      test_per_class: int = 20) -> LongTailedDataset:
    """Gaussian clusters with exponentially decaying train counts."""
    counts = exponential_counts(num_classes, n_max, rho)
    return _synth_from_counts(counts, feature_dim, seed, sigma, test_per_class)


def synth_pareto(num_classes: int, n_max: int, alpha: float, feature_dim: int,
                 seed: int, sigma: float = 0.35,
                 test_per_class: int = 20) -> LongTailedDataset:
    """Gaussian clusters with rank-power-law train counts."""
    counts = pareto_counts(num_classes, n_max, alpha)
    return _synth_from_counts(counts, feature_dim, seed, sigma, test_per_class)


# ---- samplers ---------------------------------------------------------------


def sampler_probs(strategy: str, class_counts, progress: float = 0.0) -> np.ndarray:
    """Per-class pick probabilities for one draw.

    instance: p_j proportional to n_j (plain frequency).
    class_balanced: uniform 1/K regardless of counts.
    square_root: p_j proportional to sqrt(n_j).
    mix_balanced: linear blend from instance to class_balanced as progress
    goes 0 -> 1.
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.ndim != 1 or counts.shape[0] == 0 or np.any(counts < 1):
        raise ConfigurationError(f"class counts must be positive, got {counts}")
    if strategy == "instance":
        return counts / counts.sum()
    if strategy == "class_balanced":
        return np.full(counts.shape[0], 1.0 / counts.shape[0])
    if strategy == "square_root":
        root = np.sqrt(counts)
        return root / root.sum()
    if strategy == "mix_balanced":
        if not 0.0 <= progress <= 1.0:
            raise ConfigurationError(f"progress must be in [0, 1], got {progress}")
        return ((1.0 - progress) * sampler_probs("instance", counts)
                + progress * sampler_probs("class_balanced", counts))
    raise ConfigurationError(f"unknown sampler strategy {strategy!r}")


@dataclass
class SamplerState:
    """Owns the rng stream and (for mix_balanced) the schedule position."""

    strategy: str
    rng: np.random.Generator
    progress: float = 0.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(
                f"sampler strategy must be one of {STRATEGIES}, got {self.strategy!r}")

    @classmethod
    def create(cls, strategy: str, seed) -> "SamplerState":
        return cls(strategy, np.random.default_rng(seed))

    def set_progress(self, progress: float) -> None:
        if progress < self.progress:
            raise ConfigurationError(
                f"progress must not decrease: {self.progress} -> {progress}")
        self.progress = min(progress, 1.0)


def draw(state: SamplerState, dataset: LongTailedDataset) -> tuple[int, int]:
    """One (class_id, row_index) pick: class by strategy, instance uniform."""
    probs = sampler_probs(state.strategy, dataset.class_counts, state.progress)
    cls = int(state.rng.choice(dataset.num_classes, p=probs))
    rows = dataset.train_rows_for_class(cls)
    row = int(rows[state.rng.integers(rows.shape[0])])
    return cls, row


def draw_batch(state: SamplerState, dataset: LongTailedDataset,
               batch_size: int) -> tuple[np.ndarray, np.ndarray]:
    """batch_size independent draws; same stream as repeated draw() calls."""
    classes = np.empty(batch_size, dtype=np.int64)
    rows = np.empty(batch_size, dtype=np.int64)
    for i in range(batch_size):
        classes[i], rows[i] = draw(state, dataset)
    return classes, rows


# ---- dataset files ----------------------------------------------------------


def write_dataset(dataset: LongTailedDataset, path) -> None:
    k = dataset.num_classes
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", dataset.features.shape[0]))
        f.write(struct.pack("<I", dataset.feature_dim))
        f.write(struct.pack("<I", k))
        f.write(struct.pack(f"<{k}Q", *dataset.class_counts.tolist()))
        f.write(struct.pack("<Q", dataset.test_per_class))
        row_fmt = struct.Struct(f"<I{dataset.feature_dim}d")
        for label, row in zip(dataset.labels, dataset.features):
            f.write(row_fmt.pack(int(label), *row.tolist()))


def read_dataset(path) -> LongTailedDataset:
    with open(path, "rb") as f:
        blob = f.read()

    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise DatasetFormatError(
                f"{path}: truncated at byte {pos} while reading {what}")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic at byte 0")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    (n_total,) = struct.unpack("<Q", take(8, "row count"))
    (feature_dim,) = struct.unpack("<I", take(4, "feature dim"))
    (num_classes,) = struct.unpack("<I", take(4, "class count"))
    counts = np.array(struct.unpack(f"<{num_classes}Q",
                                    take(8 * num_classes, "train counts")),
                      dtype=np.int64)
    (test_per_class,) = struct.unpack("<Q", take(8, "test count"))

    expected = int(counts.sum()) + num_classes * test_per_class
    if n_total != expected:
        raise DatasetFormatError(
            f"{path}: header says {n_total} rows but counts imply {expected}")

    row_fmt = struct.Struct(f"<I{feature_dim}d")
    features = np.empty((n_total, feature_dim))
    labels = np.empty(n_total, dtype=np.int64)
    for i in range(n_total):
        rec = row_fmt.unpack(take(row_fmt.size, f"row {i}"))
        labels[i] = rec[0]
        features[i] = rec[1:]
    if pos != len(blob):
        raise DatasetFormatError(
            f"{path}: {len(blob) - pos} trailing bytes after byte {pos}")
    if not np.all(np.isfinite(features)):
        bad = int(np.flatnonzero(~np.isfinite(features).all(axis=1))[0])
        raise DatasetFormatError(f"{path}: non-finite feature in row {bad}")
    if np.any(labels < 0) or np.any(labels >= num_classes):
        bad = int(np.flatnonzero((labels < 0) | (labels >= num_classes))[0])
        raise DatasetFormatError(
            f"{path}: label {int(labels[bad])} out of range in row {bad}")

    n_train = int(counts.sum())
    hist = np.bincount(labels[:n_train], minlength=num_classes)
    if not np.array_equal(hist, counts):
        raise DatasetFormatError(
            f"{path}: train labels disagree with header counts: expected "
            f"{counts.tolist()}, found {hist.tolist()}")
    test_hist = np.bincount(labels[n_train:], minlength=num_classes)
    if not np.all(test_hist == test_per_class):
        raise DatasetFormatError(
            f"{path}: test split not balanced: expected {test_per_class} per "
            f"class, found {test_hist.tolist()}")

    return LongTailedDataset(features, labels, counts, int(test_per_class))
