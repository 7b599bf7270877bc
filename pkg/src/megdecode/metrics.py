"""Classification metrics recomputable from a stored confusion matrix, plus
rank-based AUROC with midrank tie handling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, UndefinedMetricError

MACRO_PRESENT = "present"  # classes absent from both y_true and y_pred drop out
MACRO_ALL = "all"  # absent classes contribute F1 = 0


@dataclass(frozen=True)
class MetricReport:
    f1_macro: float
    balanced_accuracy: float
    per_class_f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray
    f1_pos: float | None = None
    jaccard: float | None = None
    auroc_macro: float | None = None

    def to_dict(self) -> dict:
        out = {
            "f1_macro": self.f1_macro,
            "balanced_accuracy": self.balanced_accuracy,
            "per_class_f1": self.per_class_f1.tolist(),
            "support": self.support.tolist(),
            "confusion": self.confusion.tolist(),
        }
        for k in ("f1_pos", "jaccard", "auroc_macro"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ContractError("y_true and y_pred must have equal length")
    if len(y_true) and (min(y_true.min(), y_pred.min()) < 0 or max(y_true.max(), y_pred.max()) >= n_classes):
        raise ContractError("labels outside [0, n_classes)")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def confusion_metrics(y_true, y_pred, n_classes: int, macro: str = MACRO_PRESENT) -> MetricReport:
    """Per-class precision/recall/F1 with the 0/0 -> 0 convention.

    F1-macro averages per-class F1; ``macro`` picks whether classes absent
    from both the references and the predictions are excluded (default) or
    still counted as zeros. Balanced accuracy averages recall over classes
    with support. Binary inputs additionally get positive-class F1 and the
    Jaccard index TP / (TP + FP + FN).
    """
    if macro not in (MACRO_PRESENT, MACRO_ALL):
        raise ContractError(f"unknown macro convention {macro!r}")
    cm = confusion_matrix(y_true, y_pred, n_classes)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    fn = support - tp
    fp = predicted - tp

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)

    if macro == MACRO_PRESENT:
        keep = (support > 0) | (predicted > 0)
        if not keep.any():
            raise UndefinedMetricError("no class present in either labels or predictions")
        f1_macro = float(f1[keep].mean())
    else:
        f1_macro = float(f1.mean())

    with_support = support > 0
    balanced = float(recall[with_support].mean()) if with_support.any() else 0.0

    f1_pos = jaccard = None
    if n_classes == 2:
        f1_pos = float(f1[1])
        denom = tp[1] + fp[1] + fn[1]
        jaccard = float(tp[1] / denom) if denom > 0 else 0.0
    return MetricReport(
        f1_macro=f1_macro,
        balanced_accuracy=balanced,
        per_class_f1=f1,
        support=support,
        confusion=cm,
        f1_pos=f1_pos,
        jaccard=jaccard,
    )


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc_binary(y_true, scores) -> float:
    """Mann-Whitney rank form; ties get half credit via midranks."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int((y_true == 1).sum())
    n_neg = int((y_true == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative")
    ranks = _midranks(scores)
    rank_sum = ranks[y_true == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auroc_macro(y_true, scores, n_classes: int) -> float:
    """Mean one-vs-rest AUROC over classes with both outcomes present.

    ``scores`` is [N] for binary problems (probability of class 1) or
    [N, n_classes] otherwise.
    """
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        if n_classes != 2:
            raise ContractError("1-D scores only valid for binary problems")
        return auroc_binary(y_true, scores)
    if scores.shape != (len(y_true), n_classes):
        raise ContractError("scores must be [N, n_classes]")
    values = []
    for cls in range(n_classes):
        mask = (y_true == cls).astype(np.int64)
        if mask.sum() == 0 or mask.sum() == len(mask):
            continue
        values.append(auroc_binary(mask, scores[:, cls]))
    if not values:
        raise UndefinedMetricError("every class lacks positives or negatives")
    return float(np.mean(values))
