from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def auc_rank(labels: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counted half."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_trapezoid(labels: np.ndarray, scores: np.ndarray) -> float:
    """Area under the ROC curve by the trapezoid rule over distinct thresholds."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    tpr, fpr = [0.0], [0.0]
    for thr in np.unique(scores)[::-1]:
        hit = scores >= thr
        tpr.append((hit & labels).sum() / n_pos)
        fpr.append((hit & ~labels).sum() / n_neg)
    return float(np.trapezoid(tpr, fpr))


def classification_metrics(labels, probs: np.ndarray) -> dict:
    """acc / pre / rec / f1 / auc with class 1 as positive.

    ``probs`` is (K, C); for C > 2 precision, recall, F1 and AUC are macro
    one-vs-rest averages.
    """
    y = np.asarray(labels, dtype=int)
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    pred = P.argmax(axis=1)
    C = P.shape[1]
    out = {"acc": float(np.mean(pred == y)) if y.size else float("nan")}
    classes = [1] if C == 2 else list(range(C))
    pre, rec, f1, auc = [], [], [], []
    for c in classes:
        tp = np.sum((pred == c) & (y == c))
        fp = np.sum((pred == c) & (y != c))
        fn = np.sum((pred != c) & (y == c))
        p_ = tp / (tp + fp) if tp + fp else 0.0
        r_ = tp / (tp + fn) if tp + fn else 0.0
        pre.append(p_)
        rec.append(r_)
        f1.append(2 * p_ * r_ / (p_ + r_) if p_ + r_ else 0.0)
        auc.append(auc_rank(y == c, P[:, c]))
    out.update(
        pre=float(np.mean(pre)), rec=float(np.mean(rec)), f1=float(np.mean(f1)), auc=float(np.mean(auc))
    )
    return out
