"""Evaluation: confusion matrix, macro precision/recall/F1, per-class
accuracy, and one-vs-rest ROC curves with AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Activity
from .features import FeatureSet, normalize_set
from .model import ModelParams, predict_batch

N_CLASSES = len(Activity)


def confusion(preds, truth) -> np.ndarray:
    """6x6 count matrix, rows = true class, columns = predicted class (ids 1..6)."""
    preds = np.asarray(preds, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if preds.shape != truth.shape or preds.ndim != 1:
        raise ValueError(f"prediction/truth length mismatch: {preds.shape} vs {truth.shape}")
    if preds.size == 0:
        raise ValueError("cannot build a confusion matrix from zero samples")
    for name, arr in (("prediction", preds), ("truth", truth)):
        if arr.min() < 1 or arr.max() > N_CLASSES:
            raise ValueError(f"{name} ids must be in 1..{N_CLASSES}")
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(cm, (truth - 1, preds - 1), 1)
    return cm


def accuracy_of(cm: np.ndarray) -> float:
    return float(np.trace(cm) / cm.sum())


def per_class_accuracy(cm: np.ndarray) -> np.ndarray:
    row_sums = cm.sum(axis=1)
    return np.where(row_sums > 0, np.diag(cm) / np.maximum(row_sums, 1), 0.0)


def _per_class_precision_recall(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diag = np.diag(cm).astype(np.float64)
    col_sums = cm.sum(axis=0)
    row_sums = cm.sum(axis=1)
    precision = np.where(col_sums > 0, diag / np.maximum(col_sums, 1), 0.0)
    recall = np.where(row_sums > 0, diag / np.maximum(row_sums, 1), 0.0)
    return precision, recall


def macro_prf(cm: np.ndarray) -> tuple[float, float, float]:
    """Unweighted macro precision/recall and their harmonic-mean F1.

    Precision of a class with an empty predicted column counts as 0.
    """
    cm = np.asarray(cm)
    if cm.sum() == 0:
        raise ValueError("empty confusion matrix")
    if np.any(cm.sum(axis=1) == 0):
        missing = [Activity(i + 1).short for i in np.flatnonzero(cm.sum(axis=1) == 0)]
        raise ValueError(f"classes without true instances: {', '.join(missing)}")
    precision, recall = _per_class_precision_recall(cm)
    p, r = float(precision.mean()), float(recall.mean())
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def macro_prf_lenient(cm: np.ndarray) -> tuple[float, float, float]:
    """macro_prf over only the classes present in the truth (smoke subsets)."""
    present = cm.sum(axis=1) > 0
    precision, recall = _per_class_precision_recall(cm)
    p = float(precision[present].mean())
    r = float(recall[present].mean())
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def f1_macro_per_class(cm: np.ndarray) -> float:
    """Mean of the per-class F1 scores (secondary report field)."""
    precision, recall = _per_class_precision_recall(cm)
    denom = precision + recall
    per_class = np.where(denom > 0, 2.0 * precision * recall / np.maximum(denom, 1e-300), 0.0)
    return float(per_class.mean())


def roc_curve(probs: np.ndarray, truth, activity: Activity) -> tuple[np.ndarray, float]:
    """One-vs-rest ROC points and trapezoid AUC for one class.

    probs is (n, 6); ties in the class score enter the sweep as one
    threshold group, so the curve is deterministic.
    """
    probs = np.asarray(probs, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    scores = probs[:, activity.value - 1]
    positive = truth == activity.value
    n_pos = int(positive.sum())
    n_neg = int(positive.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"cannot compute ROC for {activity.short}: {n_pos} positives, {n_neg} negatives"
        )
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positive[order]
    # Last index of each tie group in the descending sweep.
    boundaries = np.flatnonzero(np.diff(sorted_scores) != 0)
    group_ends = np.append(boundaries, scores.size - 1)
    tp = np.cumsum(sorted_pos)[group_ends]
    fp = (group_ends + 1) - tp
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    points = np.column_stack([fpr, tpr])
    auc = float(np.trapezoid(tpr, fpr))
    return points, auc


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray
    per_class_accuracy: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    f1_macro_per_class: float
    roc: dict[str, tuple[np.ndarray, float]]
    zero_precision_classes: list[str]

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "class_order": [a.short for a in Activity],
            "per_class_accuracy": {
                a.short: float(self.per_class_accuracy[a.value - 1]) for a in Activity
            },
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "f1_macro_per_class": self.f1_macro_per_class,
            "auc": {label: float(auc) for label, (_, auc) in self.roc.items()},
            "zero_precision_classes": self.zero_precision_classes,
        }


def report_from_predictions(probs: np.ndarray, truth) -> EvalReport:
    """Assemble the full report from class probabilities and true ids."""
    preds = np.argmax(probs, axis=1) + 1
    cm = confusion(preds, truth)
    p, r, f1 = macro_prf(cm)
    roc = {}
    for activity in Activity:
        points, auc = roc_curve(probs, truth, activity)
        roc[activity.short] = (points, auc)
    zero_cols = np.flatnonzero(cm.sum(axis=0) == 0)
    return EvalReport(
        accuracy=accuracy_of(cm),
        confusion=cm,
        per_class_accuracy=per_class_accuracy(cm),
        macro_precision=p,
        macro_recall=r,
        macro_f1=f1,
        f1_macro_per_class=f1_macro_per_class(cm),
        roc=roc,
        zero_precision_classes=[Activity(i + 1).short for i in zero_cols],
    )


def evaluate(params: ModelParams, features: FeatureSet) -> EvalReport:
    """Evaluate a model on raw (unnormalized) features of one split.

    Normalization uses the stats carried by the model; a model without
    stats treats the features as already normalized.
    """
    if params.norm is not None:
        features = normalize_set(features, params.norm)
    probs = predict_batch(params, features.freq, features.power)
    return report_from_predictions(probs, features.labels)
