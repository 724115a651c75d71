"""Accuracy, Macro-F1, FP/FN error rates and Welch's t-test.

Sarcastic is the positive class throughout.
"""

from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np
from scipy import stats

from .core import EmptyInput, Label


class DegenerateLabels(UserWarning):
    """Gold labels (or a class denominator) cover only one class."""


class InsufficientRuns(ValueError):
    pass


def _check(preds: Sequence[Label], golds: Sequence[Label]) -> None:
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    if not golds:
        raise EmptyInput("no labels to score")


def confusion(preds: Sequence[Label], golds: Sequence[Label]) -> dict[str, int]:
    _check(preds, golds)
    S = Label.SARCASTIC
    tp = sum(p is S and g is S for p, g in zip(preds, golds))
    fp = sum(p is S and g is not S for p, g in zip(preds, golds))
    fn = sum(p is not S and g is S for p, g in zip(preds, golds))
    return {"tp": tp, "fp": fp, "fn": fn, "tn": len(golds) - tp - fp - fn}


def accuracy(preds: Sequence[Label], golds: Sequence[Label]) -> float:
    _check(preds, golds)
    return sum(p is g for p, g in zip(preds, golds)) / len(golds)


def _f1(tp: int, fp: int, fn: int) -> float:
    # zero-denominator precision/recall count as 0
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def per_class_f1(preds: Sequence[Label], golds: Sequence[Label]) -> dict[Label, float]:
    cm = confusion(preds, golds)
    return {
        Label.SARCASTIC: _f1(cm["tp"], cm["fp"], cm["fn"]),
        # roles of fp/fn swap when NotSarcastic is the positive class
        Label.NOT_SARCASTIC: _f1(cm["tn"], cm["fn"], cm["fp"]),
    }


def macro_f1(preds: Sequence[Label], golds: Sequence[Label]) -> float:
    """Unweighted mean of the two per-class F1 scores.

    A class absent from both predictions and golds scores 0. Golds that
    contain a single class trigger a ``DegenerateLabels`` warning.
    """
    scores = per_class_f1(preds, golds)
    if len(set(golds)) < 2:
        warnings.warn("gold labels contain a single class; Macro-F1 is degenerate", DegenerateLabels, stacklevel=2)
    return (scores[Label.SARCASTIC] + scores[Label.NOT_SARCASTIC]) / 2


def error_rates(preds: Sequence[Label], golds: Sequence[Label]) -> tuple[float, float]:
    """``(fp_rate, fn_rate)`` as FP / #gold-NotSarcastic and FN / #gold-Sarcastic.

    A rate whose gold class is empty is NaN, with a ``DegenerateLabels`` warning.
    """
    cm = confusion(preds, golds)
    negatives = cm["fp"] + cm["tn"]
    positives = cm["tp"] + cm["fn"]
    if negatives == 0 or positives == 0:
        warnings.warn("a gold class is empty; its error rate is NaN", DegenerateLabels, stacklevel=2)
    fp_rate = cm["fp"] / negatives if negatives else math.nan
    fn_rate = cm["fn"] / positives if positives else math.nan
    return fp_rate, fn_rate


def welch_statistic(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch's t statistic and Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise InsufficientRuns(f"need at least 2 values per group, got {a.size} and {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("t-test inputs must be finite")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    se2 = va + vb
    diff = a.mean() - b.mean()
    if se2 == 0:
        return (0.0 if diff == 0 else math.copysign(math.inf, diff)), math.inf
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return float(t), float(df)


def unpaired_t_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided p-value of Welch's unequal-variance t-test."""
    t, df = welch_statistic(a, b)
    if t == 0:
        return 1.0
    if math.isinf(t):
        return 0.0
    p = 2.0 * stats.t.sf(abs(t), df)
    return float(min(1.0, max(0.0, p)))
