"""Confusion counts, scalar metrics, ROC/AUC and cross-validated evaluation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import svm
from .dataset import GLOBAL, PER_FOLD, EncodedDataset, FoldPlan, normalize
from .kernels import gram

REPORT_FORMAT = "gsvma-eval-report"
REPORT_VERSION = 1
NO_NORMALIZATION = "none"

METRIC_NAMES = ("accuracy", "ppv", "recall", "specificity", "f_measure")
TABLE_COLUMNS = ("Method", "ACC", "PPV", "F-measure", "Recall", "Specificity", "AUC")


class EvaluationError(ValueError):
    pass


class LengthMismatch(EvaluationError):
    pass


class EmptyInput(EvaluationError):
    pass


class SingleClassInput(EvaluationError):
    pass


class FoldError(RuntimeError):
    def __init__(self, fold: int, cause: Exception):
        self.fold = fold
        super().__init__(f"fold {fold}: {cause}")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape:
        raise LengthMismatch(f"{t.size} true labels vs {p.size} predictions")
    if t.size == 0:
        raise EmptyInput("confusion matrix of zero samples")
    pos_t, pos_p = t == 1, p == 1
    return ConfusionMatrix(
        tp=int(np.sum(pos_t & pos_p)),
        fp=int(np.sum(~pos_t & pos_p)),
        fn=int(np.sum(pos_t & ~pos_p)),
        tn=int(np.sum(~pos_t & ~pos_p)),
    )


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    ppv: float
    recall: float
    specificity: float
    f_measure: float
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        d = asdict(self)
        d["degenerate"] = list(self.degenerate)
        return d


def _ratio(num: float, den: float, name: str, flags: list) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy, PPV, recall, specificity and F-measure.

    A 0/0 ratio evaluates to 0 and its name is listed in ``degenerate``.
    """
    if cm.total <= 0:
        raise EmptyInput("metrics of an empty confusion matrix")
    flags: list[str] = []
    accuracy = (cm.tp + cm.tn) / cm.total
    ppv = _ratio(cm.tp, cm.tp + cm.fp, "ppv", flags)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", flags)
    specificity = _ratio(cm.tn, cm.tn + cm.fp, "specificity", flags)
    f_measure = _ratio(2 * ppv * recall, ppv + recall, "f_measure", flags)
    return Metrics(accuracy, ppv, recall, specificity, f_measure, tuple(flags))


def macro_average(per_fold: Sequence[Metrics]) -> Metrics:
    vals = {name: float(np.mean([getattr(m, name) for m in per_fold])) for name in METRIC_NAMES}
    flags = sorted({f for m in per_fold for f in m.degenerate})
    return Metrics(**vals, degenerate=tuple(flags))


def roc_curve(y_true, scores) -> np.ndarray:
    """ROC points ``(fpr, tpr)`` from (0, 0) to (1, 1), one step per distinct score.

    Tied scores move both rates at once, giving a diagonal segment.
    """
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise LengthMismatch(f"{y.size} labels vs {s.size} scores")
    n_pos = int(np.sum(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of tied scores
    ends = np.append(np.flatnonzero(np.diff(s)), s.size - 1)
    tps = np.cumsum(y == 1)[ends]
    fps = (ends + 1) - tps
    fpr = np.concatenate(([0.0], fps / n_neg))
    tpr = np.concatenate(([0.0], tps / n_pos))
    return np.column_stack([fpr, tpr])


def auc(roc_points) -> float:
    pts = np.asarray(roc_points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2))


@dataclass
class EvalReport:
    fold_matrices: list[ConfusionMatrix]
    pooled: ConfusionMatrix
    micro: Metrics
    macro: Metrics
    roc_points: np.ndarray
    auc: float
    decision_values: np.ndarray
    config: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def accuracy(self) -> float:
        return self.micro.accuracy

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "config": self.config,
            "seed": self.seed,
            "folds": [asdict(cm) for cm in self.fold_matrices],
            "pooled": asdict(self.pooled),
            "micro": self.micro.as_dict(),
            "macro": self.macro.as_dict(),
            "auc": self.auc,
            "roc": [[float(a), float(b)] for a, b in self.roc_points],
            "decision_values": [float(v) for v in self.decision_values],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("format") != REPORT_FORMAT or d.get("version") != REPORT_VERSION:
            raise EvaluationError(f"unsupported report format {d.get('format')!r} "
                                  f"v{d.get('version')!r}")

        def m(x):
            return Metrics(**{k: x[k] for k in METRIC_NAMES}, degenerate=tuple(x["degenerate"]))

        return cls(
            fold_matrices=[ConfusionMatrix(**f) for f in d["folds"]],
            pooled=ConfusionMatrix(**d["pooled"]),
            micro=m(d["micro"]),
            macro=m(d["macro"]),
            roc_points=np.asarray(d["roc"], dtype=float).reshape(-1, 2),
            auc=float(d["auc"]),
            decision_values=np.asarray(d["decision_values"], dtype=float),
            config=d["config"],
            seed=d["seed"],
        )


def table_row(method: str, report: EvalReport) -> list[str]:
    """One comparison-table row, metrics in percent with two decimals."""
    m = report.micro
    vals = (m.accuracy, m.ppv, m.f_measure, m.recall, m.specificity, report.auc)
    return [method] + [f"{100 * v:.2f}" for v in vals]


def table_csv(rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    writer.writerows(rows)
    return buf.getvalue()


def evaluate_folds(gram_for_fold: Callable[[int], np.ndarray], labels, folds: FoldPlan,
                   svm_config: svm.SvmConfig, config_echo: dict | None = None) -> EvalReport:
    """Train and score every fold from full-sample Gram matrices.

    ``gram_for_fold(f)`` returns the n x n kernel matrix over all samples as
    seen by fold ``f``; rows and columns are sliced into train and test.
    """
    y = np.asarray(labels)
    scores = np.empty(y.size)
    fold_cms = []
    for f in range(folds.k):
        test = folds.test_indices(f)
        train = folds.train_indices(f)
        if test.size == 0:
            raise FoldError(f, EvaluationError("empty test fold"))
        try:
            K = gram_for_fold(f)
            if K.shape != (y.size, y.size):
                raise EvaluationError(f"gram matrix {K.shape} does not cover {y.size} samples")
            sol = svm.fit_gram(K[np.ix_(train, train)], y[train], svm_config.C,
                               svm_config.tolerance, svm_config.max_pair_updates)
        except (ValueError, ArithmeticError) as exc:
            raise FoldError(f, exc) from exc
        coef = sol.alpha * y[train]
        scores[test] = K[np.ix_(test, train)] @ coef + sol.bias
        fold_cms.append(confusion(y[test], np.where(scores[test] >= 0, 1, -1)))
    pooled = fold_cms[0]
    for cm in fold_cms[1:]:
        pooled = pooled + cm
    points = roc_curve(y, scores)
    return EvalReport(
        fold_matrices=fold_cms,
        pooled=pooled,
        micro=metrics(pooled),
        macro=macro_average([metrics(cm) for cm in fold_cms]),
        roc_points=points,
        auc=auc(points),
        decision_values=scores,
        config=config_echo or {},
        seed=folds.seed,
    )


def cross_validate(dataset: EncodedDataset, mask, folds: FoldPlan, svm_config: svm.SvmConfig,
                   normalize_policy: str = PER_FOLD) -> EvalReport:
    """k-fold evaluation of an SVM restricted to the masked columns.

    ``normalize_policy`` is ``per-fold`` (scaler fit on each training split),
    ``global`` (fit once on every row) or ``none`` (data used as given).
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.size != dataset.matrix.shape[1] or not mask.any():
        raise EvaluationError("mask must be nonzero and match the column count")
    if folds.assignments.size != dataset.n_samples:
        raise EvaluationError("fold plan does not match the dataset")
    kernel = svm_config.kernel

    if normalize_policy == PER_FOLD:
        def gram_for_fold(f):
            scaled = normalize(dataset, PER_FOLD, folds.train_indices(f))
            return gram(kernel, scaled.matrix[:, mask])
    elif normalize_policy in (GLOBAL, NO_NORMALIZATION):
        base = normalize(dataset, GLOBAL) if normalize_policy == GLOBAL else dataset
        K_all = gram(kernel, base.matrix[:, mask])

        def gram_for_fold(f):
            return K_all
    else:
        raise EvaluationError(f"unknown normalization policy {normalize_policy!r}")

    echo = {
        "svm": svm_config.to_dict(),
        "normalize": normalize_policy,
        "folds": folds.k,
        "columns": [c.name for c, keep in zip(dataset.columns, mask) if keep],
    }
    return evaluate_folds(gram_for_fold, dataset.labels, folds, svm_config, echo)
