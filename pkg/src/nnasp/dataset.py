"""Synthetic XOR-style datasets, CSV I/O and stratified k-fold splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed datasets, CSV parse failures and bad fold requests."""


def feature_name(index: int) -> str:
    return f"input_feat_{index}"


@dataclass(frozen=True)
class Instance:
    features: tuple[float, ...]
    label: int


@dataclass(frozen=True)
class Dataset:
    feature_names: tuple[str, ...]
    class_count: int
    instances: tuple[Instance, ...]
    label_name: str = "class"

    def __post_init__(self):
        if self.class_count < 1:
            raise DatasetError("class_count must be positive")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DatasetError("feature names must be unique")
        d = len(self.feature_names)
        for i, inst in enumerate(self.instances):
            if len(inst.features) != d:
                raise DatasetError(f"instance {i} has {len(inst.features)} features, expected {d}")
            if not 0 <= inst.label < self.class_count:
                raise DatasetError(f"instance {i} has label {inst.label} outside [0, {self.class_count})")

    @classmethod
    def from_arrays(cls, X, y, class_count: int | None = None,
                    feature_names: Sequence[str] | None = None,
                    label_name: str = "class") -> "Dataset":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if X.ndim != 2 or len(X) != len(y):
            raise DatasetError("X must be 2-D with one row per label")
        if feature_names is None:
            feature_names = [feature_name(i) for i in range(X.shape[1])]
        if class_count is None:
            class_count = int(y.max()) + 1 if len(y) else 1
        instances = tuple(Instance(tuple(float(v) for v in row), int(lbl)) for row, lbl in zip(X, y))
        return cls(tuple(feature_names), int(class_count), instances, label_name)

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @cached_property
    def X(self) -> np.ndarray:
        X = np.array([inst.features for inst in self.instances], dtype=float).reshape(len(self), self.n_features)
        X.flags.writeable = False
        return X

    @cached_property
    def y(self) -> np.ndarray:
        y = np.array([inst.label for inst in self.instances], dtype=int)
        y.flags.writeable = False
        return y

    def subset(self, indices) -> "Dataset":
        return Dataset(self.feature_names, self.class_count,
                       tuple(self.instances[i] for i in indices), self.label_name)

    def majority_class(self) -> int:
        counts = np.bincount(self.y, minlength=self.class_count)
        return int(np.argmax(counts))


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train: Dataset
    test: Dataset
    train_indices: tuple[int, ...] = ()
    test_indices: tuple[int, ...] = ()


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return (x >= 0.5).astype(int)


def _uniform_features(n: int, d: int, seed: int) -> np.ndarray:
    if n < 1:
        raise DatasetError("n must be positive")
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, d))


def xor_label(features) -> int:
    bits = _round_half_up(np.asarray(features[:2], dtype=float))
    return int(bits[0] ^ bits[1])


def modified_xor_label(features) -> int:
    bits = _round_half_up(np.asarray(features[:3], dtype=float))
    return int(bits[0] ^ bits[1] ^ bits[2])


def gen_xor(n: int, d: int = 10, seed: int = 0) -> Dataset:
    """Uniform [0, 1] features; label is round(x0) XOR round(x1)."""
    if d < 2:
        raise DatasetError(f"XOR needs at least 2 features, got d={d}")
    X = _uniform_features(n, d, seed)
    bits = _round_half_up(X[:, :2])
    return Dataset.from_arrays(X, bits[:, 0] ^ bits[:, 1], class_count=2, label_name="xor")


def gen_modified_xor(n: int, d: int = 10, seed: int = 0) -> Dataset:
    """Like :func:`gen_xor` but the label is the parity of the first three rounded features."""
    if d < 3:
        raise DatasetError(f"Modified-XOR needs at least 3 features, got d={d}")
    X = _uniform_features(n, d, seed)
    bits = _round_half_up(X[:, :3])
    return Dataset.from_arrays(X, bits[:, 0] ^ bits[:, 1] ^ bits[:, 2], class_count=2, label_name="xor")


def xor_truth_table(repeat: int = 2) -> Dataset:
    """The 4-row XOR gate table repeated ``repeat`` times, with features named input_feat_0/1."""
    table = [((0.0, 0.0), 0), ((0.0, 1.0), 1), ((1.0, 0.0), 1), ((1.0, 1.0), 0)]
    rows = table * repeat
    return Dataset.from_arrays([r[0] for r in rows], [r[1] for r in rows], class_count=2, label_name="xor")


def save_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*dataset.feature_names, dataset.label_name])
        for inst in dataset.instances:
            # repr gives the shortest string that round-trips a float exactly
            writer.writerow([*(repr(float(v)) for v in inst.features), inst.label])


def load_csv(path, class_count: int | None = None) -> Dataset:
    """Read a CSV with a header row; the last column is the integer class label.

    Without ``class_count`` the class count is inferred as ``max(label) + 1``
    (at least 2).  With it, labels outside ``[0, class_count)`` are rejected.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise DatasetError(f"{path}: header needs at least one feature and a label column")
    d = len(header) - 1
    X, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise DatasetError(f"{path}: row {lineno} has {len(row) - 1} features, header declares {d}")
        try:
            feats = [float(cell) for cell in row[:d]]
        except ValueError:
            raise DatasetError(f"{path}: row {lineno} has a non-numeric feature cell") from None
        try:
            label = int(row[d])
        except ValueError:
            raise DatasetError(f"{path}: row {lineno} has a non-integer label {row[d]!r}") from None
        if label < 0 or (class_count is not None and label >= class_count):
            raise DatasetError(f"{path}: row {lineno} has unknown label {label}")
        X.append(feats)
        y.append(label)
    if class_count is None:
        class_count = max(2, max(y) + 1) if y else 2
    return Dataset.from_arrays(np.array(X, dtype=float).reshape(len(X), d), y, class_count=class_count,
                               feature_names=header[:d], label_name=header[d])


def stratified_kfold(dataset: Dataset, k: int = 5, seed: int = 0) -> list[FoldSplit]:
    """Shuffle each class's indices with a seeded generator and deal them round-robin into k folds."""
    if k < 2:
        raise DatasetError("k must be at least 2")
    y = dataset.y
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in range(dataset.class_count):
        idx = np.flatnonzero(y == c)
        if len(idx) == 0:
            continue
        if len(idx) < k:
            raise DatasetError(f"class {c} has {len(idx)} instances, fewer than k={k}")
        idx = rng.permutation(idx)
        for j, i in enumerate(idx):
            # offset keeps fold sizes balanced when class sizes are not multiples of k
            folds[(j + offset) % k].append(int(i))
        offset = (offset + len(idx)) % k
    splits = []
    all_idx = set(range(len(dataset)))
    for f, test_idx in enumerate(folds):
        test_idx = sorted(test_idx)
        train_idx = sorted(all_idx.difference(test_idx))
        splits.append(FoldSplit(f, dataset.subset(train_idx), dataset.subset(test_idx),
                                tuple(train_idx), tuple(test_idx)))
    return splits
