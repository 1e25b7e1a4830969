"""Dataset ingestion, source partitions and classifier-accuracy utilities."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .game import CooperativeGame

log = logging.getLogger(__name__)

NB_VAR_FLOOR = 1e-9


class SchemaError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    classes: list[str] = field(default_factory=list)
    rejected_rows: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features must be (rows, dims) with one label per row")
        if not self.classes:
            k = int(self.labels.max()) + 1 if self.labels.size else 0
            self.classes = [str(c) for c in range(k)]
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.classes)):
            raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def subset(self, rows: np.ndarray) -> "Dataset":
        return replace(self, features=self.features[rows], labels=self.labels[rows])


@dataclass
class SourcePartition:
    """Owner (source id) of each training row."""

    assignment: np.ndarray
    num_sources: int

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.assignment.size and (
            self.assignment.min() < 0 or self.assignment.max() >= self.num_sources
        ):
            raise ValueError("source ids must lie in [0, num_sources)")

    def rows_of(self, source: int) -> np.ndarray:
        return np.nonzero(self.assignment == source)[0]


@dataclass(frozen=True)
class KNN:
    k: int = 3

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"k must be a positive odd integer, got {self.k}")


@dataclass(frozen=True)
class GaussianNB:
    pass


ModelKind = KNN | GaussianNB


def model_from_dict(d: dict) -> ModelKind:
    kind = str(d.get("kind", "")).lower()
    if kind == "knn":
        return KNN(int(d.get("k", 3)))
    if kind in ("gaussian_nb", "naive_bayes", "nb"):
        return GaussianNB()
    raise SchemaError(f"unknown model kind {d.get('kind')!r}")


# ------------------------------------------------------------------ ingestion


def ingest_csv(
    path: str | Path, label_column: str, seed: int = 0, val_fraction: float = 0.2
) -> tuple[Dataset, Dataset]:
    """Read a headered CSV and split it into shuffled train/validation sets.

    Labels are mapped to dense integers in first-seen order. Rows with a
    non-numeric or missing feature cell are dropped; the count is stored on
    both returned datasets as ``rejected_rows``.
    """
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must lie in (0, 1)")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise SchemaError(f"{path}: label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        names = [h for j, h in enumerate(header) if j != li]
        rows, labels, rejected = [], [], 0
        for rec in reader:
            if not rec:
                continue
            if len(rec) != len(header):
                rejected += 1
                continue
            try:
                feats = [float(c) for j, c in enumerate(rec) if j != li]
            except ValueError:
                rejected += 1
                continue
            label = rec[li].strip()
            if not label or not all(math.isfinite(x) for x in feats):
                rejected += 1
                continue
            rows.append(feats)
            labels.append(label)
    if rejected:
        log.warning("%s: rejected %d unparseable rows", path, rejected)
    classes: list[str] = []
    index: dict[str, int] = {}
    for lab in labels:
        if lab not in index:
            index[lab] = len(classes)
            classes.append(lab)
    y = np.array([index[lab] for lab in labels], dtype=np.int64)
    x = np.array(rows, dtype=float).reshape(len(rows), len(names))
    perm = np.random.default_rng(seed).permutation(len(y))
    n_val = int(round(val_fraction * len(y)))
    val_rows, train_rows = perm[:n_val], perm[n_val:]
    full = Dataset(x, y, names, classes, rejected)
    return full.subset(np.sort(train_rows)), full.subset(np.sort(val_rows))


def equal_random_partition(n_rows: int, num_sources: int, seed: int) -> SourcePartition:
    """Shuffle rows and deal them round-robin so source sizes differ by at most one."""
    if num_sources < 1:
        raise ValueError("num_sources must be >= 1")
    perm = np.random.default_rng(seed).permutation(n_rows)
    assignment = np.empty(n_rows, dtype=np.int64)
    assignment[perm] = np.arange(n_rows) % num_sources
    return SourcePartition(assignment, num_sources)


def load_partition_csv(path: str | Path, n_rows: int) -> SourcePartition:
    """Read ``row_index,source_id`` pairs (header optional)."""
    assignment = np.full(n_rows, -1, dtype=np.int64)
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            try:
                row, src = int(rec[0]), int(rec[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise SchemaError(f"{path}:{lineno}: expected row_index,source_id") from None
            if not 0 <= row < n_rows:
                raise SchemaError(f"{path}:{lineno}: row {row} outside training set")
            assignment[row] = src
    if (assignment < 0).any():
        raise SchemaError(f"{path}: {int((assignment < 0).sum())} training rows unassigned")
    return SourcePartition(assignment, int(assignment.max()) + 1)


# ------------------------------------------------------------------ classifiers


def _majority(labels: np.ndarray, num_classes: int) -> int:
    return int(np.argmax(np.bincount(labels, minlength=num_classes)))


class _AccuracyOracle:
    """Fits a classifier on a coalition's rows and scores it on validation."""

    def __init__(self, train: Dataset, validation: Dataset, partition: SourcePartition, kind):
        if len(partition.assignment) != len(train):
            raise ValueError("partition must assign every training row")
        self.train = train
        self.val = validation
        self.partition = partition
        self.kind = kind
        self.k_classes = max(train.num_classes, validation.num_classes)
        self.val_majority = _majority(validation.labels, self.k_classes) if len(validation) else 0
        self.source_rows = [partition.rows_of(s) for s in range(partition.num_sources)]
        # standardise with full-training-set statistics so v is coalition-independent
        mu = train.features.mean(axis=0)
        sd = train.features.std(axis=0)
        sd[sd == 0] = 1.0
        self.xt = (train.features - mu) / sd
        self.xv = (validation.features - mu) / sd
        if isinstance(kind, KNN):
            diff = self.xv[:, None, :] - self.xt[None, :, :]
            self.dist = np.sqrt((diff**2).sum(axis=2))

    def rows(self, mask: int) -> np.ndarray:
        parts = [self.source_rows[s] for s in range(self.partition.num_sources) if mask >> s & 1]
        if not parts:
            return np.empty(0, dtype=np.int64)
        rows = np.concatenate(parts)
        # coalition data is a set: identical (features, label) points count once
        key = np.column_stack([self.train.features[rows], self.train.labels[rows]])
        _, first = np.unique(key, axis=0, return_index=True)
        return np.sort(rows[first])

    def __call__(self, mask: int) -> float:
        if len(self.val) == 0:
            return 0.0
        rows = self.rows(mask)
        if rows.size == 0:
            pred = np.full(len(self.val), self.val_majority)
        else:
            y = self.train.labels[rows]
            if np.unique(y).size < 2:
                pred = np.full(len(self.val), _majority(y, self.k_classes))
            elif isinstance(self.kind, KNN):
                pred = self._knn(rows, y)
            else:
                pred = self._nb(rows, y)
        return float(np.mean(pred == self.val.labels))

    def _knn(self, rows: np.ndarray, y: np.ndarray) -> np.ndarray:
        k = min(self.kind.k, rows.size)
        d = self.dist[:, rows]
        nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
        votes = np.zeros((d.shape[0], self.k_classes))
        np.add.at(votes, (np.arange(d.shape[0])[:, None], y[nearest]), 1.0)
        best = votes.max(axis=1, keepdims=True)
        tied = votes == best
        # ties go to the class of the closest neighbour among the tied classes
        first = np.where(tied[np.arange(d.shape[0])[:, None], y[nearest]], np.arange(k), k)
        pick = first.argmin(axis=1)
        return y[nearest[np.arange(d.shape[0]), pick]]

    def _nb(self, rows: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = self.xt[rows]
        logpost = np.full((len(self.val), self.k_classes), -np.inf)
        for c in np.unique(y):
            xc = x[y == c]
            mean = xc.mean(axis=0)
            var = np.maximum(xc.var(axis=0), NB_VAR_FLOOR)
            ll = -0.5 * (np.log(2 * np.pi * var) + (self.xv - mean) ** 2 / var).sum(axis=1)
            logpost[:, c] = ll + math.log(xc.shape[0] / x.shape[0])
        return logpost.argmax(axis=1)


def build_utility(
    train: Dataset,
    validation: Dataset,
    partition: SourcePartition,
    kind: ModelKind,
    name: str = "accuracy",
) -> CooperativeGame:
    """Game whose value is the validation accuracy of ``kind`` fit on ``S``'s rows.

    The empty coalition predicts the validation majority class. A coalition
    whose data holds a single class predicts that class.
    """
    oracle = _AccuracyOracle(train, validation, partition, kind)
    return CooperativeGame(partition.num_sources, oracle, (0.0, 1.0), name=name)


# ------------------------------------------------------------------ fixtures


def make_synthetic_similarity_dataset(
    seed: int, per_region: int = 30, val_per_region: int = 30
) -> tuple[Dataset, Dataset, SourcePartition]:
    """Three well-separated Gaussian regions owned by four sources.

    Source 0 (yellow) and source 1 (blue) exclusively own one region each;
    sources 2 (RED) and 3 (REDD) hold identical copies of the third region.
    Returns ``(train, validation, partition)``.
    """
    rng = np.random.default_rng(seed)
    centres = np.array([[-6.0, 0.0], [6.0, 0.0], [0.0, 8.0]])

    def draw(m):
        xs = [rng.normal(c, 1.0, size=(m, 2)) for c in centres]
        ys = [np.full(m, lab) for lab in range(3)]
        return xs, ys

    xs, ys = draw(per_region)
    x = np.vstack([xs[0], xs[1], xs[2], xs[2]])
    y = np.concatenate([ys[0], ys[1], ys[2], ys[2]])
    owner = np.repeat([0, 1, 2, 3], per_region)
    names = ["x0", "x1"]
    classes = ["yellow", "blue", "red"]
    vx, vy = draw(val_per_region)
    train = Dataset(x, y, names, classes)
    val = Dataset(np.vstack(vx), np.concatenate(vy), names, classes)
    return train, val, SourcePartition(owner, 4)


def make_noise_fixture(
    seed: int,
    noise_rates: Sequence[float],
    rows_per_source: int = 20,
    val_rows: int = 200,
) -> tuple[Dataset, Dataset, SourcePartition]:
    """Two overlapping Gaussian classes split across sources, then label-noised."""
    rng = np.random.default_rng(seed)
    n_src = len(noise_rates)

    def draw(m):
        y = rng.integers(0, 2, size=m)
        x = rng.normal(0.0, 1.0, size=(m, 2)) + np.where(y[:, None] == 1, 1.5, -1.5)
        return x, y

    x, y = draw(n_src * rows_per_source)
    owner = np.repeat(np.arange(n_src), rows_per_source)
    part = SourcePartition(owner, n_src)
    train = Dataset(x, y, ["x0", "x1"], ["0", "1"])
    vx, vy = draw(val_rows)
    val = Dataset(vx, vy, ["x0", "x1"], ["0", "1"])
    noisy = add_label_noise(train, noise_rates, part, seed + 1)
    return noisy, val, part


def add_label_noise(
    dataset: Dataset, rate_per_source: Sequence[float], partition: SourcePartition, seed: int
) -> Dataset:
    """Flip each label to a uniformly drawn *other* class at its source's rate."""
    rates = np.asarray(rate_per_source, dtype=float)
    if rates.shape != (partition.num_sources,) or np.any((rates < 0) | (rates > 1)):
        raise ValueError("need one rate in [0, 1] per source")
    if dataset.num_classes < 2:
        return replace(dataset, labels=dataset.labels.copy())
    rng = np.random.default_rng(seed)
    flip = rng.random(len(dataset)) < rates[partition.assignment]
    shift = rng.integers(1, dataset.num_classes, size=len(dataset))
    labels = np.where(flip, (dataset.labels + shift) % dataset.num_classes, dataset.labels)
    return replace(dataset, labels=labels)
