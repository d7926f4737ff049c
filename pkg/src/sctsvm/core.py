"""Domain types shared by every module.

Class ids are integers. A binary classifier for the pair ``(pos, neg)`` always
maps the smaller id to ``+1``; histories rely on that orientation never
flipping, otherwise the parameter-space trend is destroyed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class SctError(Exception):
    """Base class for all library errors."""


class DimensionError(SctError, ValueError):
    pass


class ArgumentError(SctError, ValueError):
    pass


class ClassMissingError(SctError, ValueError):
    pass


class InsufficientPointsError(SctError, ValueError):
    pass


class OrientationError(SctError, ValueError):
    pass


def _frozen_array(values, dtype=float, ndim=1) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ClassifierParams:
    """Linear decision function ``f(x) = w.x + b``."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        w = _frozen_array(self.w)
        if w.size < 1:
            raise DimensionError("weight vector must have at least one entry")
        b = float(self.b)
        if not (np.all(np.isfinite(w)) and np.isfinite(b)):
            raise ArgumentError("classifier parameters must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return self.w.size

    def __eq__(self, other):
        if not isinstance(other, ClassifierParams):
            return NotImplemented
        return self.b == other.b and np.array_equal(self.w, other.w)

    def __neg__(self) -> "ClassifierParams":
        return ClassifierParams(-self.w, -self.b)

    def __repr__(self):
        return f"ClassifierParams(w={self.w.tolist()}, b={self.b!r})"


def stack_params(c: ClassifierParams) -> np.ndarray:
    """Return ``p = (w_1, ..., w_m, b)``."""
    return np.append(c.w, c.b)


def unstack_params(p: Sequence[float]) -> ClassifierParams:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise DimensionError(f"stacked parameters need length >= 2, got shape {p.shape}")
    return ClassifierParams(p[:-1], p[-1])


@dataclass(frozen=True)
class TimedClassifier:
    params: ClassifierParams
    date: int
    accuracy: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "date", int(self.date))
        if self.accuracy is not None:
            acc = float(self.accuracy)
            if not 0.0 <= acc <= 1.0:
                raise ArgumentError(f"accuracy must lie in [0, 1], got {acc}")
            object.__setattr__(self, "accuracy", acc)


def canonical_pair(a: int, b: int) -> tuple[int, int]:
    a, b = int(a), int(b)
    if a == b:
        raise ArgumentError(f"a class pair needs two distinct ids, got ({a}, {b})")
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class PairHistory:
    """Window of the most recent classifiers for one canonical class pair."""

    pos_class: int
    neg_class: int
    entries: tuple = ()
    window: int = 4

    def __post_init__(self):
        pos, neg = int(self.pos_class), int(self.neg_class)
        if pos >= neg:
            raise OrientationError(
                f"pos_class must be the smaller id; got ({pos}, {neg})"
            )
        if int(self.window) < 1:
            raise ArgumentError("window must be a positive integer")
        entries = tuple(self.entries)
        if len(entries) > self.window:
            raise ArgumentError(f"{len(entries)} entries exceed window {self.window}")
        dims = {e.params.m for e in entries}
        if len(dims) > 1:
            raise DimensionError(f"history mixes feature dimensions {sorted(dims)}")
        dates = [e.date for e in entries]
        if any(d2 <= d1 for d1, d2 in zip(dates, dates[1:])):
            raise ArgumentError(f"history dates must be strictly increasing: {dates}")
        object.__setattr__(self, "pos_class", pos)
        object.__setattr__(self, "neg_class", neg)
        object.__setattr__(self, "window", int(self.window))
        object.__setattr__(self, "entries", entries)

    @property
    def pair(self) -> tuple[int, int]:
        return (self.pos_class, self.neg_class)

    @property
    def m(self) -> Optional[int]:
        return self.entries[0].params.m if self.entries else None

    def __len__(self):
        return len(self.entries)

    def stacked(self) -> np.ndarray:
        """N x (m+1) matrix of stacked parameters, oldest first."""
        return np.array([stack_params(e.params) for e in self.entries])

    def dates(self) -> np.ndarray:
        return np.array([e.date for e in self.entries], dtype=np.int64)

    def append(self, entry: TimedClassifier) -> "PairHistory":
        """Add ``entry`` and drop the oldest entries beyond the window."""
        entries = (self.entries + (entry,))[-self.window:]
        return PairHistory(self.pos_class, self.neg_class, entries, self.window)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    date: int

    def __post_init__(self):
        x = _frozen_array(self.features, ndim=2)
        y = _frozen_array(self.labels, dtype=np.int64)
        if x.shape[0] < 1:
            raise ArgumentError("a dataset needs at least one row")
        if x.shape[0] != y.shape[0]:
            raise DimensionError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(x)):
            raise ArgumentError("features must be finite")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "date", int(self.date))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    def classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels))

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(self.features[rows], self.labels[rows], self.date)


@dataclass(frozen=True, eq=False)
class BinaryView:
    features: np.ndarray
    y: np.ndarray
    pair: tuple
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    def has_both_labels(self) -> bool:
        return bool(np.any(self.y == 1) and np.any(self.y == -1))


def make_binary_view(d: LabeledDataset, pos: int, neg: int) -> BinaryView:
    """Rows of ``d`` labelled ``pos`` (mapped to +1) or ``neg`` (mapped to -1).

    Row order is preserved. Either class may be absent, giving a one-sided or
    empty view.
    """
    pos, neg = int(pos), int(neg)
    if pos == neg:
        raise ArgumentError(f"pos and neg must differ, got {pos}")
    keep = np.flatnonzero((d.labels == pos) | (d.labels == neg))
    y = np.where(d.labels[keep] == pos, 1.0, -1.0)
    x = d.features[keep]
    for arr in (x, y, keep):
        arr.setflags(write=False)
    return BinaryView(x, y, (pos, neg), keep)
