"""Dataset container, covariate standardization and index-set algebra.

Covariate matrices always carry an explicit intercept in column 0. Index sets
refer to the predictor columns ``1..p-1`` and never contain the intercept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ConstantColumn, DataError, EmptyArm, NonFinite

IndexSet = tuple[int, ...]


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed ``(Y, A, X)`` for ``n`` units.

    Parameters
    ----------
    y : array of shape (n,)
        Outcome.
    a : array of shape (n,)
        Treatment indicator, every entry exactly 0 or 1.
    x : array of shape (n, p)
        Covariates with the constant intercept in column 0.
    column_names : sequence of str, optional
        One name per column of ``x``. Defaults to ``intercept, X1, ..., X{p-1}``.

    Notes
    -----
    Construction validates shapes, finiteness, binary treatment and the
    intercept column. Having both arms nonempty (and hence ``n >= 2``) is
    *not* a construction invariant, because single-arm datasets are
    legitimate outputs of :func:`split_by_arm`; call
    :meth:`require_both_arms` where it matters.
    """

    y: np.ndarray
    a: np.ndarray
    x: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        y = _frozen(self.y)
        a = _frozen(self.a)
        x = _frozen(self.x)
        if x.ndim != 2 or y.ndim != 1 or a.ndim != 1:
            raise DataError("y and a must be vectors and x a matrix")
        n, p = x.shape
        if len(y) != n or len(a) != n:
            raise DataError(f"length mismatch: len(y)={len(y)}, len(a)={len(a)}, rows(x)={n}")
        if n < 1:
            raise DataError("at least one observation is required")
        if p < 1:
            raise DataError("x needs at least the intercept column")
        for name, arr in (("outcome", y), ("treatment", a), ("covariates", x)):
            if not np.all(np.isfinite(arr)):
                raise NonFinite(name)
        if not np.all((a == 0.0) | (a == 1.0)):
            raise DataError("treatment must be coded exactly 0/1")
        if not np.all(x[:, 0] == 1.0):
            raise DataError("column 0 of x must be identically 1 (intercept)")
        names = tuple(self.column_names) or ("intercept",) + tuple(f"X{j}" for j in range(1, p))
        if len(names) != p:
            raise DataError(f"{len(names)} column names given for {p} columns")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.a.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    def require_both_arms(self):
        if self.n_treated == 0 or self.n_control == 0:
            raise EmptyArm(self.n_treated, self.n_control)
        return self

    def subset_rows(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.a[rows], self.x[rows], self.column_names)

    @classmethod
    def from_arrays(cls, y, a, covariates, names: Sequence[str] | None = None) -> "Dataset":
        """Build a dataset from a covariate matrix *without* intercept column."""
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        x = np.column_stack([np.ones(covariates.shape[0]), covariates])
        if names is not None:
            names = ("intercept",) + tuple(names)
        return cls(y, a, x, names or ())


@dataclass(frozen=True, eq=False)
class Standardization:
    """Per-column affine map applied to predictor columns ``1..p-1``."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "scale", _frozen(self.scale))
        if self.mean.shape != self.scale.shape:
            raise DataError("mean and scale must have equal length")
        if np.any(self.scale <= 0):
            raise DataError("scale entries must be strictly positive")

    def apply(self, data: Dataset) -> Dataset:
        x = np.array(data.x)
        x[:, 1:] = (x[:, 1:] - self.mean) / self.scale
        return Dataset(data.y, data.a, x, data.column_names)

    def invert(self, data: Dataset) -> Dataset:
        x = np.array(data.x)
        x[:, 1:] = x[:, 1:] * self.scale + self.mean
        return Dataset(data.y, data.a, x, data.column_names)


def standardize(data: Dataset) -> tuple[Dataset, Standardization]:
    """Center each predictor column and scale it to unit sample SD (n-1 denominator).

    Raises
    ------
    ConstantColumn
        If a predictor column takes a single value.
    """
    cols = data.x[:, 1:]
    for j in range(cols.shape[1]):
        if np.ptp(cols[:, j]) == 0.0:
            raise ConstantColumn(j + 1, data.column_names[j + 1])
    mean = cols.mean(axis=0)
    scale = cols.std(axis=0, ddof=1)
    # a column that is already standardized is recorded as exactly (0, 1)
    fixed = (np.abs(mean) <= 1e-12) & (np.abs(scale - 1.0) <= 1e-12)
    mean = np.where(fixed, 0.0, mean)
    scale = np.where(fixed, 1.0, scale)
    transform = Standardization(mean, scale)
    return transform.apply(data), transform


def split_by_arm(data: Dataset) -> tuple[Dataset, Dataset]:
    """Partition rows into (treated, control), preserving within-arm row order."""
    data.require_both_arms()
    treated = np.flatnonzero(data.a == 1.0)
    control = np.flatnonzero(data.a == 0.0)
    return data.subset_rows(treated), data.subset_rows(control)


def canonical_order(data: Dataset) -> np.ndarray:
    """Row permutation that sorts rows lexicographically by (Y, A, X).

    Anything that depends on row position (fold assignment, bootstrap draws)
    is routed through this order so results do not depend on how the input
    rows happened to be arranged.
    """
    keys = [data.x[:, j] for j in range(data.p - 1, 0, -1)] + [data.a, data.y]
    return np.lexsort(keys)


def make_index_set(values: Iterable[int], p: int | None = None) -> IndexSet:
    out = tuple(sorted({int(v) for v in values}))
    if out and out[0] < 1:
        raise DataError("index sets hold predictor columns 1..p-1; the intercept is never a member")
    if p is not None and out and out[-1] > p - 1:
        raise DataError(f"index {out[-1]} out of range for p={p}")
    return out


def set_union(a: Iterable[int], b: Iterable[int]) -> IndexSet:
    return make_index_set(set(a) | set(b))


def set_intersection(a: Iterable[int], b: Iterable[int]) -> IndexSet:
    return make_index_set(set(a) & set(b))


def active_indices(coefficients: np.ndarray) -> IndexSet:
    """Non-intercept positions with a nonzero coefficient."""
    coefficients = np.asarray(coefficients)
    return tuple(int(j) for j in np.flatnonzero(coefficients[1:] != 0.0) + 1)
