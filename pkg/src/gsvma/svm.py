"""Binary soft-margin C-SVC trained on the dual by sequential minimal optimization.

The dual being maximized is::

    W(a) = sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K_ij
    s.t.   sum_i y_i a_i = 0,  0 <= a_i <= C

Each SMO step moves the maximal violating pair ``(i, j)`` along
``a_i += y_i t, a_j -= y_j t``, which keeps the equality constraint and
never decreases ``W``. The solver stops once the violating-pair gap
``max_{I_up} -y G - min_{I_low} -y G`` drops to ``tolerance``.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .kernels import DimensionMismatch, KernelSpec, cross_gram, gram

FORMAT = "gsvma-svm-model"
FORMAT_VERSION = 1


class SvmError(ValueError):
    pass


class SingleClassInput(SvmError):
    pass


class DidNotConverge(RuntimeWarning):
    """Pair-update budget ran out before the gap reached the tolerance."""


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    tolerance: float = 1e-3
    max_pair_updates: int = 10_000_000

    def __post_init__(self):
        if not self.C > 0:
            raise SvmError(f"C must be positive, got {self.C!r}")
        if not self.tolerance > 0:
            raise SvmError(f"tolerance must be positive, got {self.tolerance!r}")
        if self.max_pair_updates < 1:
            raise SvmError("max_pair_updates must be >= 1")

    def to_dict(self) -> dict:
        return {"C": self.C, "kernel": self.kernel.to_dict(), "tolerance": self.tolerance,
                "max_pair_updates": self.max_pair_updates}


@njit(cache=True, nogil=True)
def _smo_steps(K, y, C, tol, max_steps, alpha, grad):
    """Run up to ``max_steps`` pair updates in place; return (steps, gap)."""
    n = y.shape[0]
    steps = 0
    gap = np.inf
    while True:
        i = -1
        j = -1
        g_up = -np.inf
        g_low = np.inf
        for t in range(n):
            v = -y[t] * grad[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > g_up:
                    g_up = v
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < g_low:
                    g_low = v
                    j = t
        if i < 0 or j < 0:
            gap = 0.0
            break
        gap = g_up - g_low
        if gap <= tol or steps >= max_steps:
            break

        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta <= 1e-12:
            eta = 1e-12
        bound_i = C - alpha[i] if y[i] > 0 else alpha[i]
        bound_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = min(gap / eta, bound_i, bound_j)
        hit_i = step == bound_i
        hit_j = step == bound_j

        new_i = alpha[i] + y[i] * step
        new_j = alpha[j] - y[j] * step
        # land exactly on the box when a bound was the binding constraint
        if hit_i:
            new_i = C if y[i] > 0 else 0.0
        if hit_j:
            new_j = 0.0 if y[j] > 0 else C
        new_i = min(max(new_i, 0.0), C)
        new_j = min(max(new_j, 0.0), C)

        d_i = (new_i - alpha[i]) * y[i]
        d_j = (new_j - alpha[j]) * y[j]
        alpha[i] = new_i
        alpha[j] = new_j
        for t in range(n):
            grad[t] += y[t] * (K[t, i] * d_i + K[t, j] * d_j)
        steps += 1
    return steps, gap


@dataclass(frozen=True)
class DualSolution:
    alpha: np.ndarray
    bias: float
    objective: float
    n_steps: int
    gap: float
    converged: bool


def dual_objective(alphas, labels, gram_matrix) -> float:
    a = np.asarray(alphas, dtype=float)
    y = np.asarray(labels, dtype=float)
    G = np.asarray(gram_matrix, dtype=float)
    if a.shape != y.shape or G.shape != (a.size, a.size):
        raise DimensionMismatch("alphas, labels and gram matrix disagree in size")
    ay = a * y
    return float(a.sum() - 0.5 * ay @ G @ ay)


def bias_from_gradient(alpha, labels, grad, C: float) -> float:
    """Offset b of the decision function from a dual solution.

    ``grad`` is the gradient of the minimization form, ``(Q a)_i - 1``.
    Free vectors (0 < a < C) each imply ``b = -y_i grad_i``; their mean is
    used. Without free vectors b is the midpoint of the interval allowed by
    the bound vectors.
    """
    y = np.asarray(labels, dtype=float)
    a = np.asarray(alpha, dtype=float)
    implied = -y * np.asarray(grad, dtype=float)
    free = (a > 0) & (a < C)
    if free.any():
        return float(implied[free].mean())
    lower = ((a <= 0) & (y > 0)) | ((a >= C) & (y < 0))
    upper = ((a <= 0) & (y < 0)) | ((a >= C) & (y > 0))
    lo = implied[lower].max() if lower.any() else -np.inf
    hi = implied[upper].min() if upper.any() else np.inf
    if np.isinf(lo) and np.isinf(hi):
        return 0.0
    if np.isinf(lo):
        return float(hi)
    if np.isinf(hi):
        return float(lo)
    return float((lo + hi) / 2)


def _check_labels(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1 or y.size < 2:
        raise SvmError("need at least two labelled samples")
    if not np.all((y == 1) | (y == -1)):
        raise SvmError("labels must be +1 or -1")
    if np.all(y == y[0]):
        raise SingleClassInput(f"all {y.size} labels are {int(y[0]):+d}")
    return y.astype(float)


def fit_gram(gram_matrix, labels, C: float = 1.0, tolerance: float = 1e-3,
             max_pair_updates: int = 10_000_000) -> DualSolution:
    """Solve the dual for a precomputed Gram matrix."""
    y = _check_labels(labels)
    K = np.ascontiguousarray(gram_matrix, dtype=float)
    if K.shape != (y.size, y.size):
        raise DimensionMismatch(f"gram matrix {K.shape} does not match {y.size} labels")
    alpha = np.zeros(y.size)
    grad = -np.ones(y.size)
    steps, gap = _smo_steps(K, y, float(C), float(tolerance), int(max_pair_updates), alpha, grad)
    converged = gap <= tolerance
    if not converged:
        warnings.warn(f"SMO stopped after {steps} pair updates with gap {gap:.3g} "
                      f"> tolerance {tolerance:g}", DidNotConverge, stacklevel=2)
    return DualSolution(alpha, bias_from_gradient(alpha, y, grad, C),
                        dual_objective(alpha, y, K), int(steps), float(gap), bool(converged))


@dataclass(frozen=True)
class SvmModel:
    sv_rows: np.ndarray
    coeffs: np.ndarray
    bias: float
    kernel: KernelSpec
    column_mask: np.ndarray | None = None
    dual_objective: float = float("nan")
    support: np.ndarray | None = None
    C: float = 1.0
    converged: bool = True
    gap: float = 0.0

    @property
    def n_features(self) -> int:
        return self.sv_rows.shape[1]

    def _prepare(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.column_mask is not None and X.shape[1] == self.column_mask.size:
            X = X[:, self.column_mask]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X

    def decision_function(self, X) -> np.ndarray:
        return cross_gram(self.kernel, self._prepare(X), self.sv_rows) @ self.coeffs + self.bias

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "bias": self.bias,
            "column_mask": None if self.column_mask is None else [int(b) for b in self.column_mask],
            "support": None if self.support is None else [int(i) for i in self.support],
            "coeffs": [float(c) for c in self.coeffs],
            "sv_rows": [[float(v) for v in row] for row in self.sv_rows],
            "dual_objective": self.dual_objective,
            "converged": self.converged,
            "gap": self.gap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise SvmError(f"unsupported model format {d.get('format')!r} v{d.get('version')!r}")
        mask = d.get("column_mask")
        support = d.get("support")
        return cls(
            sv_rows=np.asarray(d["sv_rows"], dtype=float).reshape(len(d["coeffs"]), -1),
            coeffs=np.asarray(d["coeffs"], dtype=float),
            bias=float(d["bias"]),
            kernel=KernelSpec.from_dict(d["kernel"]),
            column_mask=None if mask is None else np.asarray(mask, dtype=bool),
            dual_objective=float(d["dual_objective"]),
            support=None if support is None else np.asarray(support, dtype=np.intp),
            C=float(d["C"]),
            converged=bool(d["converged"]),
            gap=float(d["gap"]),
        )


def save_model(model: SvmModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> SvmModel:
    with open(path, encoding="utf-8") as fh:
        return SvmModel.from_dict(json.load(fh))


def train(data, labels, config: SvmConfig = SvmConfig(), column_mask=None) -> SvmModel:
    X = np.atleast_2d(np.asarray(data, dtype=float))
    mask = None
    if column_mask is not None:
        mask = np.asarray(column_mask, dtype=bool)
        if mask.size != X.shape[1]:
            raise DimensionMismatch(f"mask length {mask.size} != {X.shape[1]} columns")
        if not mask.any():
            raise SvmError("empty column mask")
        X = X[:, mask]
    y = _check_labels(labels)
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"{X.shape[0]} rows but {y.size} labels")
    kernel = config.kernel.resolve(X.shape[1])
    sol = fit_gram(gram(kernel, X), y, config.C, config.tolerance, config.max_pair_updates)
    sv = np.flatnonzero(sol.alpha > 0)
    return SvmModel(
        sv_rows=X[sv].copy(),
        coeffs=sol.alpha[sv] * y[sv],
        bias=sol.bias,
        kernel=kernel,
        column_mask=mask,
        dual_objective=sol.objective,
        support=sv,
        C=config.C,
        converged=sol.converged,
        gap=sol.gap,
    )


def decision_value(model: SvmModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("decision_value takes a single feature vector")
    return float(model.decision_function(x[None, :])[0])


def predict(model: SvmModel, x) -> int:
    """Sign of the decision value; an exact zero is labelled +1."""
    return 1 if decision_value(model, x) >= 0 else -1


def predict_many(model: SvmModel, X) -> np.ndarray:
    return np.where(model.decision_function(X) >= 0, 1, -1)


@dataclass(frozen=True)
class KktReport:
    max_violation: float
    equality_residual: float


def check_kkt(model: SvmModel, data, labels, config: SvmConfig | None = None) -> KktReport:
    """Worst violation of the C-SVC optimality conditions on the training set.

    For margin ``m_i = y_i f(x_i)``: ``a=0`` needs ``m >= 1``, ``0<a<C`` needs
    ``m == 1`` and ``a=C`` needs ``m <= 1``. Box violations count too.
    """
    C = model.C if config is None else config.C
    y = np.asarray(labels, dtype=float)
    alpha = np.zeros(y.size)
    if model.support is not None:
        alpha[model.support] = model.coeffs * y[model.support]
    margin = y * model.decision_function(data)
    box = np.maximum(np.maximum(-alpha, alpha - C), 0.0)
    at_lower = alpha <= 0
    at_upper = alpha >= C
    free = ~at_lower & ~at_upper
    viol = np.where(at_lower, np.maximum(1 - margin, 0.0), 0.0)
    viol = np.where(at_upper, np.maximum(margin - 1, 0.0), viol)
    viol = np.where(free, np.abs(margin - 1), viol)
    return KktReport(float(np.max(np.maximum(viol, box))), float(abs(np.dot(alpha, y))))
