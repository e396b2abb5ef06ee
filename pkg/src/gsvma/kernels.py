"""Kernel functions and Gram matrices for the linear, polynomial, RBF and ANOVA families.

Every family is built from per-column terms that are summed and then
finished::

    linear      sum_k x_k y_k
    polynomial  (1 + sum_k x_k y_k) ** d
    rbf         exp(-gamma * sum_k (x_k - y_k) ** 2)
    anova       sum_k exp(-sigma * (x_k - y_k) ** 2) ** d

:func:`gram` and :class:`ColumnTerms` accumulate those terms in the same
column order, so a Gram matrix taken from the cache is bit-identical to one
computed from the sliced feature matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

LINEAR = "linear"
POLYNOMIAL = "polynomial"
RBF = "rbf"
ANOVA = "anova"
FAMILIES = (LINEAR, POLYNOMIAL, RBF, ANOVA)


class KernelError(ValueError):
    pass


class DimensionMismatch(KernelError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and hyperparameters.

    ``gamma=None`` means ``1 / n_features`` and is resolved when the kernel
    is applied to data of known width.
    """

    family: str = ANOVA
    degree: int = 1
    gamma: float | None = None
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}")
        if isinstance(self.degree, bool) or int(self.degree) != self.degree or self.degree < 1:
            raise KernelError(f"degree must be a positive integer, got {self.degree!r}")
        object.__setattr__(self, "degree", int(self.degree))
        if self.gamma is not None and not self.gamma > 0:
            raise KernelError(f"gamma must be positive, got {self.gamma!r}")
        if not self.sigma > 0:
            raise KernelError(f"sigma must be positive, got {self.sigma!r}")

    def resolve(self, n_features: int) -> "KernelSpec":
        if self.gamma is None:
            return replace(self, gamma=1.0 / max(n_features, 1))
        return self

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family in (POLYNOMIAL, ANOVA):
            d["degree"] = self.degree
        if self.family == RBF:
            d["gamma"] = self.gamma
        if self.family == ANOVA:
            d["sigma"] = self.sigma
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["family"], d.get("degree", 1), d.get("gamma"), d.get("sigma", 1.0))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size == 0:
        raise DimensionMismatch(f"cannot compare vectors of length {x.size} and {y.size}")
    spec = spec.resolve(x.size)
    if spec.family == LINEAR:
        return float(np.dot(x, y))
    if spec.family == POLYNOMIAL:
        return float((1.0 + np.dot(x, y)) ** spec.degree)
    if spec.family == RBF:
        return math.exp(-spec.gamma * float(np.sum((x - y) ** 2)))
    return float(sum(math.exp(-spec.sigma * (a - b) ** 2) ** spec.degree for a, b in zip(x, y)))


def _term(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if spec.family in (LINEAR, POLYNOMIAL):
        return np.multiply.outer(a, b)
    diff2 = np.subtract.outer(a, b) ** 2
    if spec.family == ANOVA:
        return np.exp(-spec.sigma * diff2) ** spec.degree
    return diff2


def _finish(spec: KernelSpec, total: np.ndarray) -> np.ndarray:
    if spec.family == POLYNOMIAL:
        return (1.0 + total) ** spec.degree
    if spec.family == RBF:
        return np.exp(-spec.gamma * total)
    return total


def cross_gram(spec: KernelSpec, a, b) -> np.ndarray:
    """``K[i, j] = k(a_i, b_j)`` for two row sets of equal width."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1] or a.shape[1] == 0:
        raise DimensionMismatch(f"row widths differ: {a.shape[1]} vs {b.shape[1]}")
    spec = spec.resolve(a.shape[1])
    total = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        total += _term(spec, a[:, k], b[:, k])
    return _finish(spec, total)


def gram(spec: KernelSpec, rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[0] == 0:
        raise KernelError("gram matrix of zero rows")
    return cross_gram(spec, rows, rows)


class ColumnTerms:
    """Per-column kernel terms of one matrix, for Gram matrices of column subsets.

    Holds an ``(n_columns, n, n)`` array, so it is meant for desk-sized data
    (a few hundred rows).
    """

    def __init__(self, spec: KernelSpec, rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        self.spec = spec
        self.n_columns = rows.shape[1]
        self.terms = np.stack([_term(spec, rows[:, k], rows[:, k]) for k in range(rows.shape[1])])

    def gram(self, mask) -> np.ndarray:
        cols = np.flatnonzero(np.asarray(mask, dtype=bool))
        if cols.size == 0:
            raise KernelError("empty column mask")
        if len(mask) != self.n_columns:
            raise DimensionMismatch(f"mask length {len(mask)} != {self.n_columns} columns")
        spec = self.spec.resolve(cols.size)
        total = np.zeros(self.terms.shape[1:])
        for k in cols:
            total += self.terms[k]
        return _finish(spec, total)
