"""Samples, datasets, feature selectors, and the CSV loader.

Labels are kept in {+1.0, -1.0} throughout so they can be used directly in
margin constraints without remapping.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, DimensionMismatchError, InvalidArgumentError


@dataclass(frozen=True)
class LabeledSample:
    """One dense feature vector with a binary class label."""

    features: np.ndarray
    label: float

    def __post_init__(self):
        v = np.asarray(self.features, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise InvalidArgumentError("features must be a nonempty 1-D vector")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("features must be finite")
        if self.label not in (1.0, -1.0, 1, -1):
            raise InvalidArgumentError(f"label must be +1 or -1, got {self.label!r}")
        object.__setattr__(self, "features", v)
        object.__setattr__(self, "label", float(self.label))


class Dataset:
    """A batch of labeled samples backed by dense arrays.

    May be empty (adaptation routes samples down trees and some branches can
    run dry); dim stays meaningful either way.
    """

    __slots__ = ("X", "y", "dim")

    def __init__(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2:
            raise InvalidArgumentError("X must be 2-D (n_samples, dim)")
        if y.shape != (X.shape[0],):
            raise InvalidArgumentError("y length must match X rows")
        if X.shape[1] == 0:
            raise InvalidArgumentError("dim must be positive")
        if X.size and not np.all(np.isfinite(X)):
            raise InvalidArgumentError("features must be finite")
        if y.size and not np.all(np.isin(y, (1.0, -1.0))):
            raise InvalidArgumentError("labels must be +1 or -1")
        self.X = X
        self.y = y
        self.dim = X.shape[1]

    @classmethod
    def from_samples(cls, samples: list[LabeledSample]) -> "Dataset":
        if not samples:
            raise InvalidArgumentError("cannot infer dim from an empty sample list")
        dims = {s.features.size for s in samples}
        if len(dims) != 1:
            raise DimensionMismatchError(f"samples have mixed dims {sorted(dims)}")
        X = np.stack([s.features for s in samples])
        y = np.array([s.label for s in samples])
        return cls(X, y)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def samples(self) -> list[LabeledSample]:
        return [LabeledSample(self.X[i], self.y[i]) for i in range(len(self.y))]

    def __len__(self) -> int:
        return self.y.size

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])

    def class_counts(self) -> tuple[int, int]:
        """(positives, negatives)."""
        pos = int(np.count_nonzero(self.y > 0))
        return pos, self.y.size - pos


@dataclass(frozen=True)
class FeatureSelector:
    """Ordered subset of feature indices; the forest's notion of locality."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise InvalidArgumentError("selector must be nonempty")
        if any(i < 0 for i in idx):
            raise InvalidArgumentError("selector indices must be nonnegative")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidArgumentError("selector indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)


def apply_selector(selector: FeatureSelector, v: np.ndarray) -> np.ndarray:
    """Project v onto the selector's indices, preserving order."""
    v = np.asarray(v, dtype=np.float64)
    if selector.indices[-1] >= v.shape[-1]:
        raise DimensionMismatchError(
            f"selector index {selector.indices[-1]} out of range for dim {v.shape[-1]}"
        )
    return v[..., list(selector.indices)]


def sample_selectors(dim: int, K: int, block_fraction: float, seed: int) -> list[FeatureSelector]:
    """Draw K contiguous index blocks of length ceil(block_fraction*dim).

    Block starts are uniform over all valid positions; the same seed always
    reproduces the same list.
    """
    if dim <= 0 or K <= 0:
        raise InvalidArgumentError("dim and K must be positive")
    if not 0.0 < block_fraction <= 1.0:
        raise InvalidArgumentError("block_fraction must be in (0, 1]")
    length = math.ceil(block_fraction * dim)
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, dim - length + 1, size=K)
    return [FeatureSelector(tuple(range(s, s + length))) for s in starts]


def load_csv(path: str) -> Dataset:
    """Load a labeled dataset from CSV.

    First column is the label: {+1, -1}, or {1, 0} with 0 mapped to -1.
    Remaining columns are float features. An optional header row is detected
    by a non-numeric first cell. Ragged or malformed rows are rejected with
    their 1-based row number.
    """
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1:
                try:
                    float(row[0])
                except ValueError:
                    continue  # header row
            if width is None:
                width = len(row)
                if width < 2:
                    raise InvalidArgumentError(f"row {lineno}: need a label and at least one feature")
            elif len(row) != width:
                raise InvalidArgumentError(f"row {lineno}: expected {width} columns, got {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise InvalidArgumentError(f"row {lineno}: {exc}") from None
            lab = values[0]
            if lab not in (1.0, -1.0, 0.0) or lab != int(lab):
                raise InvalidArgumentError(f"row {lineno}: label must be +1, -1, or 0, got {row[0]}")
            values[0] = 1.0 if lab == 1.0 else -1.0
            rows.append(values)
    if not rows:
        raise DegenerateDataError(f"{path}: no data rows")
    arr = np.array(rows)
    return Dataset(arr[:, 1:], arr[:, 0])
