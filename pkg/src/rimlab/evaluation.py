"""Evaluation statistics: Dice, ROC/pROC/PR curves with fold averaging,
F1 threshold selection, stratified subject folds, pooled confusion
metrics, subject-level agreement, and the cross-validation driver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import (
    BoostedModel,
    BoostParams,
    aggregate_importance,
    feature_importance,
    predict_proba,
    train,
)
from .core import Mask3D

ROC_GRID = np.linspace(0.0, 1.0, 1001)


class SingleClassError(ValueError):
    """Curve/threshold statistics need both classes present."""


@dataclass(frozen=True)
class ScoredLesion:
    lesion_id: str
    subject_id: str
    label: int  # 1 = rim+, 0 = rim-
    probability: float
    fold: int = 0

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability {self.probability} outside [0, 1]")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0/1, got {self.label}")


@dataclass(frozen=True)
class CurveSummary:
    fpr: np.ndarray
    tpr: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    roc_auc: float
    proc_auc: float  # normalized, FPR in [0, 0.1]
    pr_auc: float


@dataclass(frozen=True)
class ConfusionMetrics:
    accuracy: float
    f1: float
    sensitivity: float
    specificity: float
    precision: float
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class SubjectAgreement:
    pearson_rho: float | None
    ci_low: float | None
    ci_high: float | None
    mse: float


def dice(a: Mask3D, b: Mask3D) -> float:
    """2|a∩b| / (|a|+|b|); both-empty convention 1.0."""
    if a.dims != b.dims:
        raise ValueError(f"mask dims differ: {a.dims} vs {b.dims}")
    na, nb = a.count(), b.count()
    if na + nb == 0:
        return 1.0
    inter = int((a.data & b.data).sum())
    return 2.0 * inter / (na + nb)


def _staircase(scored: list[ScoredLesion]):
    """ROC staircase points with tied scores grouped, plus PR inputs."""
    labels = np.array([s.label for s in scored])
    probs = np.array([s.probability for s in scored])
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("need both classes to build a curve")
    order = np.argsort(-probs, kind="stable")
    probs, labels = probs[order], labels[order]
    # group ties: advance TP/FP by whole tie blocks
    distinct = np.nonzero(np.diff(probs))[0]
    block_ends = np.append(distinct, probs.size - 1)
    tp = np.cumsum(labels)[block_ends]
    fp = np.cumsum(1 - labels)[block_ends]
    fpr = np.concatenate(([0.0], fp / n_neg))
    tpr = np.concatenate(([0.0], tp / n_pos))
    return fpr, tpr, tp, fp, n_pos


def roc_pr_curves(scored: list[ScoredLesion]) -> CurveSummary:
    fpr, tpr, tp, fp, n_pos = _staircase(scored)
    roc_auc = float(np.trapezoid(tpr, fpr))

    # partial AUC over FPR in [0, 0.1], trapezoid with an exact point
    # interpolated at the boundary, normalized so perfect -> 1.0
    limit = 0.1
    keep = fpr <= limit
    pf = fpr[keep]
    pt = tpr[keep]
    if pf[-1] < limit and keep.sum() < fpr.size:
        j = int(keep.sum())  # first index beyond the limit
        t_at = pt[-1] + (tpr[j] - pt[-1]) * (limit - pf[-1]) / (fpr[j] - pf[-1])
        pf = np.append(pf, limit)
        pt = np.append(pt, t_at)
    proc_auc = float(np.trapezoid(pt, pf) / limit)

    recall = tp / n_pos
    precision = tp / np.maximum(tp + fp, 1)
    # step-wise PR AUC: sum (R_k - R_{k-1}) * P_k
    r_prev = np.concatenate(([0.0], recall[:-1]))
    pr_auc = float(((recall - r_prev) * precision).sum())

    return CurveSummary(
        fpr=fpr,
        tpr=tpr,
        recall=np.concatenate(([0.0], recall)),
        precision=np.concatenate(([1.0], precision)),
        roc_auc=roc_auc,
        proc_auc=proc_auc,
        pr_auc=pr_auc,
    )


def average_curves(curves: list[tuple[np.ndarray, np.ndarray]], grid: np.ndarray = ROC_GRID):
    """Pointwise mean of per-fold staircases on a shared x grid.

    Each (x, y) staircase is evaluated by right-continuous piecewise-
    constant interpolation: y(g) = y at the largest x <= g.
    """
    if not curves:
        raise ValueError("need at least one fold curve")
    ys = []
    for x, y in curves:
        idx = np.searchsorted(x, grid, side="right") - 1
        idx = np.clip(idx, 0, len(y) - 1)
        ys.append(np.asarray(y)[idx])
    return grid, np.mean(ys, axis=0)


def _f1_at(labels: np.ndarray, probs: np.ndarray, threshold: float) -> float:
    pred = probs >= threshold
    tp = int((pred & (labels == 1)).sum())
    fp = int((pred & (labels == 0)).sum())
    fn = int((~pred & (labels == 1)).sum())
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def f1_threshold(scored: list[ScoredLesion]) -> float:
    """Threshold (midpoint of adjacent distinct scores) maximizing the
    F1 of "probability >= threshold"; ties break toward the higher
    threshold (fewer predicted positives)."""
    labels = np.array([s.label for s in scored])
    probs = np.array([s.probability for s in scored])
    if labels.min() == labels.max():
        raise SingleClassError("need both classes to pick an F1 threshold")
    uniq = np.unique(probs)
    candidates = [float(uniq[0])]  # everything predicted positive
    candidates += [float(0.5 * (a + b)) for a, b in zip(uniq[:-1], uniq[1:])]
    best_t = candidates[0]
    best_f1 = -1.0
    for t in candidates:
        f1 = _f1_at(labels, probs, t)
        if f1 > best_f1 or (f1 == best_f1 and t > best_t):
            best_f1, best_t = f1, t
    return best_t


def confusion_metrics(scored: list[ScoredLesion], thresholds: dict[int, float]) -> ConfusionMetrics:
    """Apply each fold's threshold, pool decisions, compute metrics."""
    tp = fp = fn = tn = 0
    for s in scored:
        pred = s.probability >= thresholds[s.fold]
        if pred and s.label == 1:
            tp += 1
        elif pred and s.label == 0:
            fp += 1
        elif not pred and s.label == 1:
            fn += 1
        else:
            tn += 1
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    sensitivity = tp / (tp + fn) if tp + fn > 0 else 0.0
    specificity = tn / (tn + fp) if tn + fp > 0 else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn > 0 else 0.0
    return ConfusionMetrics(accuracy, f1, sensitivity, specificity, precision, tp, fp, fn, tn)


def stratified_folds(rim_counts: dict[str, int], k: int = 5, seed: int = 0) -> dict[str, int]:
    """Deal subjects into k folds, stratified by rim+ count group.

    Groups are {0, 1-3, 4-6, >6}; each group is shuffled by the seed and
    dealt round-robin, so fold group-sizes differ by at most one.
    """
    if k > len(rim_counts):
        raise ValueError(f"k={k} exceeds subject count {len(rim_counts)}")

    def group(c: int) -> int:
        if c == 0:
            return 0
        if c <= 3:
            return 1
        if c <= 6:
            return 2
        return 3

    rng = np.random.default_rng(seed)
    assignment: dict[str, int] = {}
    next_fold = 0
    for gid in range(4):
        members = sorted(s for s, c in rim_counts.items() if group(c) == gid)
        rng.shuffle(members)
        for s in members:
            assignment[s] = next_fold
            next_fold = (next_fold + 1) % k
    return assignment


def subject_agreement(predicted: np.ndarray, true: np.ndarray) -> SubjectAgreement:
    """Pearson rho with a Fisher-z 95% CI, plus MSE, over per-subject counts."""
    predicted = np.asarray(predicted, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if predicted.shape != true.shape:
        raise ValueError("count vectors differ in length")
    mse = float(((predicted - true) ** 2).mean())
    n = predicted.size
    if n < 3 or predicted.std() == 0 or true.std() == 0:
        return SubjectAgreement(None, None, None, mse)
    rho = float(np.corrcoef(predicted, true)[0, 1])
    if abs(rho) >= 1.0:
        return SubjectAgreement(rho, rho, rho, mse)
    z = math.atanh(rho)
    se = 1.0 / math.sqrt(n - 3)
    return SubjectAgreement(
        rho, math.tanh(z - 1.959963984540054 * se), math.tanh(z + 1.959963984540054 * se), mse)


@dataclass(frozen=True)
class FoldRecord:
    fold: int
    threshold: float
    curve: CurveSummary
    n_train: int
    n_test: int
    fscores: np.ndarray


@dataclass(frozen=True)
class CrossValReport:
    folds: tuple[FoldRecord, ...]
    scored: tuple[ScoredLesion, ...]
    pooled: ConfusionMetrics
    mean_roc_auc: float
    mean_proc_auc: float
    mean_pr_auc: float
    averaged_roc: tuple[np.ndarray, np.ndarray]
    averaged_pr: tuple[np.ndarray, np.ndarray]
    agreement: SubjectAgreement
    importance: list[tuple[str, float]]
    feature_names: tuple[str, ...] = field(default=())

    def to_json_dict(self) -> dict:
        return {
            "pooled": {
                "accuracy": self.pooled.accuracy,
                "f1": self.pooled.f1,
                "sensitivity": self.pooled.sensitivity,
                "specificity": self.pooled.specificity,
                "precision": self.pooled.precision,
                "confusion": {"tp": self.pooled.tp, "fp": self.pooled.fp,
                              "fn": self.pooled.fn, "tn": self.pooled.tn},
            },
            "mean_roc_auc": self.mean_roc_auc,
            "mean_proc_auc": self.mean_proc_auc,
            "mean_pr_auc": self.mean_pr_auc,
            "agreement": {
                "pearson_rho": self.agreement.pearson_rho,
                "ci_low": self.agreement.ci_low,
                "ci_high": self.agreement.ci_high,
                "mse": self.agreement.mse,
            },
            "folds": [
                {
                    "fold": f.fold,
                    "threshold": f.threshold,
                    "roc_auc": f.curve.roc_auc,
                    "proc_auc": f.curve.proc_auc,
                    "pr_auc": f.curve.pr_auc,
                    "n_train": f.n_train,
                    "n_test": f.n_test,
                }
                for f in self.folds
            ],
            "averaged_roc": {
                "fpr": self.averaged_roc[0].tolist(),
                "tpr": self.averaged_roc[1].tolist(),
            },
            "averaged_pr": {
                "recall": self.averaged_pr[0].tolist(),
                "precision": self.averaged_pr[1].tolist(),
            },
            "importance": [{"measurement": m, "fscore": v} for m, v in self.importance],
        }


def crossvalidate(
    X: np.ndarray,
    y: np.ndarray,
    lesion_ids: list[str],
    subject_ids: list[str],
    fold_of_subject: dict[str, int],
    params: BoostParams = BoostParams(),
    feature_names: tuple[str, ...] | None = None,
) -> CrossValReport:
    """Train/evaluate per fold and assemble the pooled report."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).ravel()
    folds_arr = np.array([fold_of_subject[s] for s in subject_ids])
    k = int(folds_arr.max()) + 1
    if feature_names is None:
        feature_names = tuple(f"f{i}" for i in range(X.shape[1]))

    records: list[FoldRecord] = []
    scored_all: list[ScoredLesion] = []
    thresholds: dict[int, float] = {}
    fscores_per_fold: list[np.ndarray] = []
    for fold in range(k):
        test = folds_arr == fold
        train_rows = ~test
        try:
            model = train(X[train_rows], y[train_rows], params, feature_names)
        except ValueError as exc:
            raise ValueError(f"fold {fold}: {exc}") from exc
        probs = predict_proba(model, X[test])
        scored = [
            ScoredLesion(lesion_id=lid, subject_id=sid, label=int(lab),
                         probability=float(p), fold=fold)
            for lid, sid, lab, p in zip(
                np.array(lesion_ids)[test], np.array(subject_ids)[test],
                y[test], probs)
        ]
        scored_all.extend(scored)
        curve = roc_pr_curves(scored)
        threshold = f1_threshold(scored)
        thresholds[fold] = threshold
        fscores = feature_importance(model).astype(np.float64)
        fscores_per_fold.append(fscores)
        records.append(FoldRecord(fold, threshold, curve,
                                  int(train_rows.sum()), int(test.sum()), fscores))

    pooled = confusion_metrics(scored_all, thresholds)
    averaged_roc = average_curves([(r.curve.fpr, r.curve.tpr) for r in records])
    averaged_pr = average_curves([(r.curve.recall, r.curve.precision) for r in records])

    # per-subject rim+ counts, predicted via each fold's threshold
    subjects = sorted(set(subject_ids))
    true_counts = {s: 0 for s in subjects}
    pred_counts = {s: 0 for s in subjects}
    for s in scored_all:
        true_counts[s.subject_id] += s.label
        pred_counts[s.subject_id] += int(s.probability >= thresholds[s.fold])
    agreement = subject_agreement(
        np.array([pred_counts[s] for s in subjects]),
        np.array([true_counts[s] for s in subjects]))

    importance = aggregate_importance(fscores_per_fold, feature_names)
    return CrossValReport(
        folds=tuple(records),
        scored=tuple(scored_all),
        pooled=pooled,
        mean_roc_auc=float(np.mean([r.curve.roc_auc for r in records])),
        mean_proc_auc=float(np.mean([r.curve.proc_auc for r in records])),
        mean_pr_auc=float(np.mean([r.curve.pr_auc for r in records])),
        averaged_roc=averaged_roc,
        averaged_pr=averaged_pr,
        agreement=agreement,
        importance=importance,
        feature_names=feature_names,
    )
