"""Cross-validation driver and classification metrics.

The scalar ``accuracy`` in reports is the mean of per-fold accuracies (the
same quantity the hyperparameter objective maximizes); pooled accuracy over
all held-out predictions is reported separately and equals micro-F1 by the
usual single-label identity. The confusion matrix pools predictions across
folds.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifiers import ClassifierSpec, fit, predict_arrays
from .corpus import FoldAssignment
from .errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray = field(repr=False)  # rows = true, columns = predicted
    normalized: np.ndarray = field(repr=False)
    zero_support: tuple[str, ...] = ()  # true classes with no samples


@dataclass(frozen=True)
class FoldMetrics:
    fold: int
    accuracy: float
    f1_micro: float
    f1_macro: float


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float  # mean of per-fold accuracies
    accuracy_pooled: float
    f1_micro: float
    f1_macro: float
    per_class: dict[str, dict[str, float]]
    fold_breakdown: tuple[FoldMetrics, ...]

    @property
    def fold_accuracies(self) -> tuple[float, ...]:
        return tuple(f.accuracy for f in self.fold_breakdown)


def accuracy_score(y_true: Sequence[str], y_pred: Sequence[str]) -> float:
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred):
        raise ValueError("length mismatch between y_true and y_pred")
    if not y_true:
        raise ValueError("cannot score an empty prediction set")
    hits = sum(1 for t, p in zip(y_true, y_pred) if t == p)
    return hits / len(y_true)


def f1_scores(
    y_true: Sequence[str], y_pred: Sequence[str], classes: Sequence[str]
) -> tuple[float, float, dict[str, dict[str, float]]]:
    """(micro F1, macro F1, per-class precision/recall/F1).

    Per-class F1 is 0 when precision + recall is 0; macro averages over
    every entry of ``classes`` including zero-support ones; micro comes
    from pooled TP/FP/FN counts.
    """
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred):
        raise ValueError("length mismatch between y_true and y_pred")
    known = set(classes)
    stray = (set(y_true) | set(y_pred)) - known
    if stray:
        raise ValueError(f"labels outside the class list: {sorted(stray)}")
    tp = {c: 0 for c in classes}
    fp = {c: 0 for c in classes}
    fn = {c: 0 for c in classes}
    for t, p in zip(y_true, y_pred):
        if t == p:
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1
    per_class: dict[str, dict[str, float]] = {}
    f1_sum = 0.0
    for c in classes:
        prec = tp[c] / (tp[c] + fp[c]) if tp[c] + fp[c] else 0.0
        rec = tp[c] / (tp[c] + fn[c]) if tp[c] + fn[c] else 0.0
        f1 = 2.0 * prec * rec / (prec + rec) if prec + rec else 0.0
        per_class[c] = {"precision": prec, "recall": rec, "f1": f1}
        f1_sum += f1
    macro = f1_sum / len(list(classes))
    tp_all = sum(tp.values())
    fp_all = sum(fp.values())
    fn_all = sum(fn.values())
    micro = tp_all / (tp_all + 0.5 * (fp_all + fn_all)) if tp_all + fp_all + fn_all else 0.0
    return micro, macro, per_class


def confusion_matrix(
    y_true: Sequence[str],
    y_pred: Sequence[str],
    classes: Sequence[str],
    normalize: bool = True,
) -> ConfusionMatrix:
    """Count matrix (rows = true, cols = predicted) plus row-normalized copy."""
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred):
        raise ValueError("length mismatch between y_true and y_pred")
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[index[t], index[p]] += 1
    row_sums = counts.sum(axis=1)
    normalized = np.zeros_like(counts, dtype=np.float64)
    nonzero = row_sums > 0
    normalized[nonzero] = counts[nonzero] / row_sums[nonzero, None]
    zero_support = tuple(classes[i] for i in np.flatnonzero(~nonzero))
    if not normalize:
        normalized = normalized.copy()
    return ConfusionMatrix(
        classes=classes, counts=counts, normalized=normalized, zero_support=zero_support
    )


def cross_validate(
    spec: ClassifierSpec,
    X: np.ndarray,
    y: Sequence[str],
    folds: FoldAssignment,
    classes: Sequence[str] | None = None,
    n_threads: int = 1,
) -> tuple[MetricsReport, ConfusionMatrix]:
    """Fit on each fold complement, score the held-out fold, pool results.

    Folds may run concurrently; results are merged in fold order so the
    output does not depend on scheduling.
    """
    X = np.asarray(X, dtype=np.float64)
    y = list(y)
    if len(y) != X.shape[0] or len(folds.assignment) != X.shape[0]:
        raise ValueError("X, y, and fold assignment must agree in length")
    if classes is None:
        classes = sorted(set(y))
    classes = tuple(classes)
    y_arr = np.asarray(y, dtype=object)

    def run_fold(f: int) -> tuple[list[str], list[str]]:
        train_idx = folds.train_indices(f)
        test_idx = folds.test_indices(f)
        train_classes = set(y_arr[train_idx])
        missing = [c for c in classes if c not in train_classes and c in set(y)]
        if missing:
            raise DataError(
                f"fold {f} removes every training sample of class(es) {missing}"
            )
        model = fit(spec, X[train_idx], list(y_arr[train_idx]), classes=classes)
        label_idx, _, _ = predict_arrays(model, X[test_idx])
        return list(y_arr[test_idx]), [classes[i] for i in label_idx]

    fold_ids = list(range(folds.n_folds))
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run_fold, fold_ids))
    else:
        results = [run_fold(f) for f in fold_ids]

    pooled_true: list[str] = []
    pooled_pred: list[str] = []
    breakdown = []
    for f, (yt, yp) in zip(fold_ids, results):
        micro_f, macro_f, _ = f1_scores(yt, yp, classes)
        breakdown.append(
            FoldMetrics(fold=f, accuracy=accuracy_score(yt, yp), f1_micro=micro_f, f1_macro=macro_f)
        )
        pooled_true.extend(yt)
        pooled_pred.extend(yp)
    micro, macro, per_class = f1_scores(pooled_true, pooled_pred, classes)
    report = MetricsReport(
        accuracy=float(np.mean([fm.accuracy for fm in breakdown])),
        accuracy_pooled=accuracy_score(pooled_true, pooled_pred),
        f1_micro=micro,
        f1_macro=macro,
        per_class=per_class,
        fold_breakdown=tuple(breakdown),
    )
    cm = confusion_matrix(pooled_true, pooled_pred, classes)
    return report, cm


# --- export -----------------------------------------------------------------


def report_to_dict(report: MetricsReport, cm: ConfusionMatrix | None = None) -> dict:
    out = {
        "accuracy": report.accuracy,
        "accuracy_pooled": report.accuracy_pooled,
        "f1_micro": report.f1_micro,
        "f1_macro": report.f1_macro,
        "per_class": report.per_class,
        "fold_breakdown": [
            {"fold": f.fold, "accuracy": f.accuracy, "f1_micro": f.f1_micro, "f1_macro": f.f1_macro}
            for f in report.fold_breakdown
        ],
    }
    if cm is not None:
        out["confusion"] = {
            "classes": list(cm.classes),
            "counts": cm.counts.tolist(),
            "normalized": cm.normalized.tolist(),
            "zero_support": list(cm.zero_support),
        }
    return out


def save_report(report: MetricsReport, path: str | Path, cm: ConfusionMatrix | None = None) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report, cm), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def confusion_to_csv(cm: ConfusionMatrix, path: str | Path, normalized: bool = True) -> None:
    """CSV with the predicted classes as the header row, true classes as rows."""
    matrix = cm.normalized if normalized else cm.counts
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["true\\predicted", *cm.classes])
        for i, label in enumerate(cm.classes):
            if normalized:
                writer.writerow([label, *(f"{v:.6f}" for v in matrix[i])])
            else:
                writer.writerow([label, *(int(v) for v in matrix[i])])
