"""Gradient-boosted decision trees for rim+/rim- classification.

Second-order (Newton) boosting on the logistic loss with exact greedy
split search. Split thresholds sit at midpoints between consecutive
distinct sorted values; ties in gain break toward the lower feature
index, then the lower threshold, so training is fully deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Malformed or unsupported model file."""


@dataclass(frozen=True)
class BoostParams:
    n_trees: int = 2000
    max_depth: int = 15
    learning_rate: float = 5e-3
    l2_leaf_regularization: float = 1.0
    min_child_weight: float = 1.0
    positive_class_weight: float = 1.0
    base_score: float = 0.5

    def validate(self) -> None:
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.base_score < 1:
            raise ValueError("base_score must be a probability in (0, 1)")
        if self.l2_leaf_regularization < 0 or self.min_child_weight < 0:
            raise ValueError("regularization terms must be >= 0")
        if self.positive_class_weight <= 0:
            raise ValueError("positive_class_weight must be > 0")


@dataclass(frozen=True)
class Tree:
    """Flat binary regression tree. feature == -1 marks a leaf."""

    feature: np.ndarray  # int64
    threshold: np.ndarray  # float64
    left: np.ndarray  # int64, child node index
    right: np.ndarray  # int64
    value: np.ndarray  # float64, leaf weight
    default_left: np.ndarray  # bool, direction taken for missing values

    @property
    def n_internal(self) -> int:
        return int((self.feature >= 0).sum())


@dataclass(frozen=True)
class BoostedModel:
    trees: tuple[Tree, ...]
    learning_rate: float
    base_score: float
    feature_names: tuple[str, ...]
    params: BoostParams
    loss_trace: tuple[float, ...] = field(default=())

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


@njit(cache=True)
def _build_tree(X, g, h, max_depth, lam, min_child_weight):
    n, nf = X.shape
    max_nodes = 2 * n + 1
    feat = np.full(max_nodes, -1, np.int64)
    thr = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)

    idx = np.arange(n)
    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    sp = 0
    stack_node[0], stack_lo[0], stack_hi[0], stack_depth[0] = 0, 0, n, 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo, hi, depth = stack_lo[sp], stack_hi[sp], stack_depth[sp]
        m = hi - lo
        Gs = 0.0
        Hs = 0.0
        for i in range(lo, hi):
            Gs += g[idx[i]]
            Hs += h[idx[i]]

        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        if depth < max_depth and m >= 2:
            base = Gs * Gs / (Hs + lam)
            vals = np.empty(m, np.float64)
            for j in range(nf):
                for i in range(m):
                    vals[i] = X[idx[lo + i], j]
                order = np.argsort(vals)
                GL = 0.0
                HL = 0.0
                for i in range(m - 1):
                    r = idx[lo + order[i]]
                    GL += g[r]
                    HL += h[r]
                    v0 = vals[order[i]]
                    v1 = vals[order[i + 1]]
                    if v0 < v1:
                        GR = Gs - GL
                        HR = Hs - HL
                        if HL >= min_child_weight and HR >= min_child_weight:
                            gain = (
                                GL * GL / (HL + lam)
                                + GR * GR / (HR + lam)
                                - base
                            )
                            if gain > best_gain:
                                best_gain = gain
                                best_feat = j
                                best_thr = 0.5 * (v0 + v1)

        if best_feat < 0:
            value[node] = -Gs / (Hs + lam)
            continue

        # stable partition of idx[lo:hi] around the chosen threshold
        buf = np.empty(m, np.int64)
        n_left = 0
        for i in range(lo, hi):
            if X[idx[i], best_feat] < best_thr:
                buf[n_left] = idx[i]
                n_left += 1
        n_right = n_left
        for i in range(lo, hi):
            if not (X[idx[i], best_feat] < best_thr):
                buf[n_right] = idx[i]
                n_right += 1
        for i in range(m):
            idx[lo + i] = buf[i]

        feat[node] = best_feat
        thr[node] = best_thr
        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        left[node] = lchild
        right[node] = rchild
        stack_node[sp], stack_lo[sp], stack_hi[sp], stack_depth[sp] = (
            lchild, lo, lo + n_left, depth + 1)
        sp += 1
        stack_node[sp], stack_lo[sp], stack_hi[sp], stack_depth[sp] = (
            rchild, lo + n_left, hi, depth + 1)
        sp += 1

    return (feat[:n_nodes], thr[:n_nodes], left[:n_nodes],
            right[:n_nodes], value[:n_nodes])


@njit(cache=True)
def _predict_tree(feat, thr, left, right, value, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] < thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logloss(y: np.ndarray, p: np.ndarray, w: np.ndarray) -> float:
    eps = 1e-15
    p = np.clip(p, eps, 1 - eps)
    return float(-(w * (y * np.log(p) + (1 - y) * np.log(1 - p))).mean())


def train(
    X: np.ndarray,
    y: np.ndarray,
    params: BoostParams = BoostParams(),
    feature_names: tuple[str, ...] | None = None,
) -> BoostedModel:
    """Fit a Newton-boosted ensemble on rows X and binary labels y."""
    params.validate()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size or X.shape[0] < 2:
        raise ValueError(f"need matching X rows and labels, >= 2 samples; got {X.shape} / {y.size}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    if y.min() == y.max():
        raise ValueError("training labels contain a single class; need both rim+ and rim-")
    if feature_names is None:
        feature_names = tuple(f"f{i}" for i in range(X.shape[1]))
    if len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length does not match X columns")

    w = np.where(y == 1, params.positive_class_weight, 1.0)
    score = np.full(y.size, np.log(params.base_score / (1 - params.base_score)))
    lam = params.l2_leaf_regularization
    trees: list[Tree] = []
    loss_trace: list[float] = []
    for _ in range(params.n_trees):
        p = _sigmoid(score)
        g = w * (p - y)
        h = w * p * (1 - p)
        feat, thr, left, right, value = _build_tree(
            X, g, h, params.max_depth, lam, params.min_child_weight)
        default_left = np.ones(feat.size, dtype=bool)
        tree = Tree(feat, thr, left, right, value, default_left)
        trees.append(tree)
        delta = np.zeros(y.size)
        _predict_tree(feat, thr, left, right, value, X, delta)
        score = score + params.learning_rate * delta
        loss_trace.append(_logloss(y, _sigmoid(score), w))

    return BoostedModel(
        trees=tuple(trees),
        learning_rate=params.learning_rate,
        base_score=params.base_score,
        feature_names=tuple(feature_names),
        params=params,
        loss_trace=tuple(loss_trace),
    )


def decision_scores(model: BoostedModel, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"expected {model.n_features} features, got {X.shape[1]}")
    score = np.full(X.shape[0], np.log(model.base_score / (1 - model.base_score)))
    delta = np.zeros(X.shape[0])
    for t in model.trees:
        _predict_tree(t.feature, t.threshold, t.left, t.right, t.value, X, delta)
    return score + model.learning_rate * delta


def predict_proba(model: BoostedModel, X: np.ndarray) -> np.ndarray:
    """Probability of the positive (rim+) class per row."""
    return _sigmoid(decision_scores(model, X))


def feature_importance(model: BoostedModel) -> np.ndarray:
    """F-score per feature: how many internal nodes split on it."""
    scores = np.zeros(model.n_features, dtype=np.int64)
    for t in model.trees:
        used = t.feature[t.feature >= 0]
        scores += np.bincount(used, minlength=model.n_features)
    return scores


def aggregate_importance(
    fscores_per_fold: list[np.ndarray], feature_names: tuple[str, ...]
) -> list[tuple[str, float]]:
    """Collapse per-feature F-scores into per-measurement rows.

    Each first-order measurement averages its full/high/low variants,
    the two distance stats average their three variants, the component
    counts average high/low, and the 18 LBP bins average into one row;
    then everything averages across folds. Rows come back sorted by
    aggregated F-score descending (name ascending on ties).
    """
    groups: dict[str, list[int]] = {}
    for i, name in enumerate(feature_names):
        if name.startswith("lbp_"):
            key = "lbp"
        elif name.startswith(("mean_distance_", "std_distance_")):
            key = name.rsplit("_", 1)[0]
        elif name.startswith("n_components_"):
            key = "n_components"
        elif name == "volume_fraction_high":
            key = "volume_fraction"
        else:
            key = name.rsplit("_", 1)[0]
        groups.setdefault(key, []).append(i)

    rows = []
    for key, idxs in groups.items():
        per_fold = [float(np.mean(fs[idxs])) for fs in fscores_per_fold]
        rows.append((key, float(np.mean(per_fold))))
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows


def save_model(model: BoostedModel, path) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "learning_rate": model.learning_rate,
        "base_score": model.base_score,
        "feature_names": list(model.feature_names),
        "params": {
            "n_trees": model.params.n_trees,
            "max_depth": model.params.max_depth,
            "learning_rate": model.params.learning_rate,
            "l2_leaf_regularization": model.params.l2_leaf_regularization,
            "min_child_weight": model.params.min_child_weight,
            "positive_class_weight": model.params.positive_class_weight,
            "base_score": model.params.base_score,
        },
        "loss_trace": list(model.loss_trace),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
                "default_left": t.default_left.astype(int).tolist(),
            }
            for t in model.trees
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> BoostedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: cannot parse model JSON: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError(f"{path}: missing format_version")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported model format version {doc['format_version']!r} "
            f"(expected {MODEL_FORMAT_VERSION})")
    try:
        trees = tuple(
            Tree(
                feature=np.asarray(t["feature"], np.int64),
                threshold=np.asarray(t["threshold"], np.float64),
                left=np.asarray(t["left"], np.int64),
                right=np.asarray(t["right"], np.int64),
                value=np.asarray(t["value"], np.float64),
                default_left=np.asarray(t["default_left"], bool),
            )
            for t in doc["trees"]
        )
        params = BoostParams(**doc["params"])
        model = BoostedModel(
            trees=trees,
            learning_rate=float(doc["learning_rate"]),
            base_score=float(doc["base_score"]),
            feature_names=tuple(doc["feature_names"]),
            params=params,
            loss_trace=tuple(float(v) for v in doc.get("loss_trace", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model document: {exc}") from exc
    return model
