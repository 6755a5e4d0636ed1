"""Observational datasets: CSV ingest, validation, splitting and moments."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidSplit,
    MissingColumn,
    NonBinaryTreatment,
    NonFiniteValue,
)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ObservationalDataset:
    """Observed triples ``(Y_i, W_i, X_i)`` for ``n`` units.

    Arrays are copied and marked read-only on construction.
    """

    features: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DimensionMismatch(f"features must be 2-d, got shape {X.shape}")
        w = np.asarray(self.treatment)
        y = np.asarray(self.outcome, dtype=float).ravel()
        n = X.shape[0]
        if w.shape != (n,) or y.shape != (n,):
            raise DimensionMismatch(
                f"row counts differ: features {n}, treatment {w.shape}, outcome {y.shape}"
            )
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise NonFiniteValue("non-finite feature value", row=int(r) + 1, column=self._name(c, X.shape[1]))
        if not np.all(np.isfinite(y)):
            r = int(np.flatnonzero(~np.isfinite(y))[0])
            raise NonFiniteValue("non-finite outcome value", row=r + 1)
        bad = ~np.isin(w, (0, 1))
        if np.any(bad):
            r = int(np.flatnonzero(bad)[0])
            raise NonBinaryTreatment(f"treatment value {w[r]!r} not in {{0, 1}}", row=r + 1)
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DimensionMismatch(f"{len(names)} feature names for {X.shape[1]} columns")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "treatment", _frozen(w.astype(np.int64)))
        object.__setattr__(self, "outcome", _frozen(y))
        object.__setattr__(self, "feature_names", names)

    def _name(self, c, d):
        names = tuple(self.feature_names)
        return names[c] if len(names) == d else f"x{c + 1}"

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.treatment.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    def arm(self, treated: bool) -> tuple[np.ndarray, np.ndarray]:
        """Feature matrix and outcomes of one treatment arm."""
        mask = self.treatment == (1 if treated else 0)
        return self.features[mask], self.outcome[mask]

    def take(self, idx: Sequence[int] | np.ndarray) -> "ObservationalDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return ObservationalDataset(
            self.features[idx], self.treatment[idx], self.outcome[idx], self.feature_names
        )

    def with_features(self, features: np.ndarray) -> "ObservationalDataset":
        return ObservationalDataset(features, self.treatment, self.outcome, self.feature_names)

    def equals(self, other: "ObservationalDataset") -> bool:
        """Bitwise equality of all arrays and names."""
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.treatment, other.treatment)
            and np.array_equal(self.outcome, other.outcome)
        )


@dataclass(frozen=True)
class TargetMoments:
    """Column means ``X̄`` of the targeted population."""

    means: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.means, dtype=float).ravel()
        if not np.all(np.isfinite(m)):
            raise NonFiniteValue("non-finite target moment")
        object.__setattr__(self, "means", _frozen(m))

    @property
    def d(self) -> int:
        return self.means.shape[0]


@dataclass(frozen=True)
class StandardizationTransform:
    """Per-column affine map ``x -> (x - center) / scale``."""

    center: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        s = np.asarray(self.scale, dtype=float).ravel()
        if c.shape != s.shape:
            raise DimensionMismatch("center and scale lengths differ")
        if np.any(~(s > 0)):
            raise ValueError("scale entries must be positive")
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "scale", _frozen(s))

    @classmethod
    def identity(cls, d: int) -> "StandardizationTransform":
        return cls(np.zeros(d), np.ones(d))

    @property
    def d(self) -> int:
        return self.center.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise DimensionMismatch(f"expected {self.d} columns, got {X.shape[-1]}")
        return (X - self.center) / self.scale

    def invert(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.shape[-1] != self.d:
            raise DimensionMismatch(f"expected {self.d} columns, got {Z.shape[-1]}")
        return Z * self.scale + self.center


def target_moments(features: np.ndarray) -> TargetMoments:
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[0] == 0:
        raise EmptyInput("cannot average zero rows")
    return TargetMoments(X.mean(axis=0))


def fit_standardization(X: np.ndarray) -> StandardizationTransform:
    """Column means and sample standard deviations; constant columns get scale 1."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise EmptyInput("cannot standardize zero rows")
    center = X.mean(axis=0)
    if X.shape[0] > 1:
        sd = X.std(axis=0, ddof=1)
    else:
        sd = np.zeros(X.shape[1])
    constant = sd <= 1e-12 * (1.0 + np.abs(center))
    scale = np.where(constant, 1.0, sd)
    return StandardizationTransform(center, scale)


def standardize(ds: ObservationalDataset) -> tuple[ObservationalDataset, StandardizationTransform]:
    t = fit_standardization(ds.features)
    return ds.with_features(t.apply(ds.features)), t


def split_indices(n: int, test_count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted train and test index arrays of a uniform random partition."""
    if not 0 < test_count < n:
        raise InvalidSplit(f"test_count must lie in (0, {n}), got {test_count}")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    return np.sort(perm[test_count:]), np.sort(perm[:test_count])


def split_dataset(
    ds: ObservationalDataset, test_count: int, seed: int
) -> tuple[ObservationalDataset, ObservationalDataset]:
    train_idx, test_idx = split_indices(ds.n, test_count, seed)
    return ds.take(train_idx), ds.take(test_idx)


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise NonFiniteValue(f"unparseable value {cell!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise NonFiniteValue(f"non-finite value {cell!r}", row=row, column=column)
    return value


def load_dataset(
    source: str | os.PathLike | IO[str],
    outcome_col: str = "y",
    treatment_col: str = "w",
    feature_cols: Sequence[str] | None = None,
) -> ObservationalDataset:
    """Read a comma-separated file with a header row.

    Columns other than the outcome and treatment are features (in file order)
    unless ``feature_cols`` selects a subset. Rows are numbered from 1,
    excluding the header, in error messages.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_dataset(fh, outcome_col, treatment_col, feature_cols)

    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyInput("missing header row") from None
    for name in (outcome_col, treatment_col, *(feature_cols or ())):
        if name not in header:
            raise MissingColumn("column not found", column=name)
    if feature_cols is None:
        feature_cols = [h for h in header if h not in (outcome_col, treatment_col)]
    iy, iw = header.index(outcome_col), header.index(treatment_col)
    ix = [header.index(c) for c in feature_cols]

    X, w, y = [], [], []
    for r, rec in enumerate(reader, start=1):
        if not rec:
            continue
        if len(rec) != len(header):
            raise NonFiniteValue(f"expected {len(header)} cells, got {len(rec)}", row=r)
        tw = _parse_float(rec[iw], r, treatment_col)
        if tw not in (0.0, 1.0):
            raise NonBinaryTreatment(f"treatment value {rec[iw]!r} not in {{0, 1}}", row=r, column=treatment_col)
        w.append(int(tw))
        y.append(_parse_float(rec[iy], r, outcome_col))
        X.append([_parse_float(rec[i], r, c) for i, c in zip(ix, feature_cols)])
    if not y:
        raise EmptyInput("no data rows")
    features = np.array(X, dtype=float).reshape(len(y), len(ix))
    return ObservationalDataset(features, np.array(w), np.array(y), tuple(feature_cols))


def load_features(
    source: str | os.PathLike | IO[str],
    feature_cols: Sequence[str] | None = None,
    exclude: Sequence[str] = ("y", "w"),
) -> np.ndarray:
    """Read a feature matrix from CSV.

    ``feature_cols`` picks columns by name; otherwise every column not in
    ``exclude`` is used in file order.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_features(fh, feature_cols, exclude)
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyInput("missing header row") from None
    for name in feature_cols or ():
        if name not in header:
            raise MissingColumn("column not found", column=name)
    if feature_cols is None:
        feature_cols = [h for h in header if h not in exclude]
    ix = [header.index(c) for c in feature_cols]
    X = []
    for r, rec in enumerate(reader, start=1):
        if not rec:
            continue
        if len(rec) != len(header):
            raise NonFiniteValue(f"expected {len(header)} cells, got {len(rec)}", row=r)
        X.append([_parse_float(rec[i], r, c) for i, c in zip(ix, feature_cols)])
    if not X:
        raise EmptyInput("no data rows")
    return np.array(X, dtype=float).reshape(len(X), len(ix))


def save_dataset(
    ds: ObservationalDataset,
    dest: str | os.PathLike | IO[str],
    outcome_col: str = "y",
    treatment_col: str = "w",
) -> None:
    """Write ``ds`` as CSV; floats use ``repr`` so a reload is bit-identical."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            save_dataset(ds, fh, outcome_col, treatment_col)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow([outcome_col, treatment_col, *ds.feature_names])
    for i in range(ds.n):
        writer.writerow(
            [repr(float(ds.outcome[i])), str(int(ds.treatment[i]))]
            + [repr(float(v)) for v in ds.features[i]]
        )


def dumps_dataset(ds: ObservationalDataset) -> str:
    buf = io.StringIO()
    save_dataset(ds, buf)
    return buf.getvalue()
