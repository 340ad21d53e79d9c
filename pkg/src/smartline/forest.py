"""Ensemble decision trees (CART) written against numpy only.

Split search contract
---------------------
Candidate thresholds for a feature are the midpoints of adjacent distinct
sorted values. The chosen rule maximizes impurity decrease

    gain = impurity(node) - (nL/n) * impurity(L) - (nR/n) * impurity(R)

with gini impurity for classification and variance for regression. Ties are
broken by lower feature index, then lower threshold. Rows with
``value <= threshold`` go left. ``best_split`` returns None when no candidate
has positive gain.

Randomness: tree i draws from the substream seeded ``seed + i``. A bootstrap
sample is n draws with replacement; per-node feature subsets (when
max_features < d) are sampled without replacement and consumed before the
split search, left subtree built before right. When max_features == d no
subset is drawn at all, which keeps column-permutation equivariance exact.

Feature importances are mean decrease in impurity: each internal node adds
``gain * node_samples / n_train`` to its feature, summed over trees and
normalized to 1. A forest that never split reports all zeros and sets the
``degenerate`` flag.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParseError, ValidationError, VersionError

FORMAT_NAME = "smartline-forest"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    n_estimators: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: int | str | None = None  # None: sqrt(d) classify, d regress
    bootstrap: bool = True

    def validate(self) -> None:
        if self.n_estimators < 1:
            raise ValidationError("n_estimators must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1 or None")
        if self.min_samples_split < 2:
            raise ValidationError("min_samples_split must be >= 2")
        if isinstance(self.max_features, str) and self.max_features not in ("sqrt", "all"):
            raise ValidationError("max_features must be an int, 'sqrt', 'all', or None")
        if isinstance(self.max_features, int) and self.max_features < 1:
            raise ValidationError("max_features must be >= 1")

    def resolve_max_features(self, d: int, kind: str) -> int:
        mf = self.max_features
        if mf is None:
            mf = "sqrt" if kind == "classify" else "all"
        if mf == "sqrt":
            return min(d, math.ceil(math.sqrt(d)))
        if mf == "all":
            return d
        return min(int(mf), d)


@dataclass(frozen=True)
class SplitRule:
    feature: int
    threshold: float
    gain: float


class Node:
    """One tree node. Internal nodes carry a rule, leaves a prediction payload."""

    __slots__ = ("feature", "threshold", "left", "right", "samples",
                 "impurity_decrease", "value", "distribution")

    def __init__(self, samples: int):
        self.feature: int | None = None
        self.threshold: float | None = None
        self.left: "Node | None" = None
        self.right: "Node | None" = None
        self.samples = samples
        self.impurity_decrease = 0.0
        self.value: float | None = None            # regression leaf mean
        self.distribution: np.ndarray | None = None  # classification leaf probs

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @classmethod
    def leaf(cls, samples: int, value: float | None = None,
             distribution: Sequence[float] | None = None) -> "Node":
        node = cls(samples)
        node.value = value
        if distribution is not None:
            node.distribution = np.asarray(distribution, dtype=np.float64)
        return node

    @classmethod
    def split(cls, feature: int, threshold: float, left: "Node", right: "Node",
              samples: int, impurity_decrease: float) -> "Node":
        node = cls(samples)
        node.feature = feature
        node.threshold = threshold
        node.left = left
        node.right = right
        node.impurity_decrease = impurity_decrease
        return node


@dataclass
class ForestModel:
    kind: str  # classify | regress
    trees: list[Node]
    feature_names: list[str]
    classes: list[int] = field(default_factory=list)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    importances: np.ndarray | None = None
    degenerate: bool = False
    y_range: tuple[float, float] | None = None
    n_train: int = 0
    seed: int = 0

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def _gini_from_counts(counts: np.ndarray, total: float) -> float:
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.dot(p, p))


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    kind: str = "classify",
    feature_indices: Sequence[int] | None = None,
    n_classes: int | None = None,
) -> SplitRule | None:
    """Exhaustive threshold scan over the given features (all by default)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n, d = X.shape
    if n < 2:
        return None
    if feature_indices is None:
        cols = np.arange(d)
    else:
        cols = np.sort(np.asarray(feature_indices, dtype=np.int64))

    if kind == "classify":
        if n_classes is None:
            n_classes = int(y.max()) + 1 if len(y) else 0
        totals = np.bincount(y.astype(np.int64), minlength=n_classes).astype(np.float64)
        parent = _gini_from_counts(totals, float(n))
    elif kind == "regress":
        yf = y.astype(np.float64)
        parent = float(np.var(yf))
    else:
        raise ValidationError(f"unknown kind {kind!r}")
    if parent <= 0.0:
        return None

    Xs = X[:, cols]
    order = np.argsort(Xs, axis=0, kind="stable")
    sv = np.take_along_axis(Xs, order, axis=0)
    valid = sv[:-1, :] < sv[1:, :]
    if not valid.any():
        return None

    nL = np.arange(1, n, dtype=np.float64)[:, None]
    nR = float(n) - nL
    if kind == "classify":
        ys = y[order]  # (n, m) per-column sorted labels
        impL = np.ones((n - 1, len(cols)))
        impR = np.ones((n - 1, len(cols)))
        for c in range(n_classes):
            cum = np.cumsum(ys == c, axis=0, dtype=np.float64)
            sumL = cum[:-1, :]
            sumR = cum[-1, :][None, :] - sumL
            impL -= (sumL / nL) ** 2
            impR -= (sumR / nR) ** 2
    else:
        ys = yf[order]
        cs = np.cumsum(ys, axis=0)
        cs2 = np.cumsum(ys * ys, axis=0)
        sumL, sumL2 = cs[:-1, :], cs2[:-1, :]
        sumR = cs[-1, :][None, :] - sumL
        sumR2 = cs2[-1, :][None, :] - sumL2
        impL = np.maximum(sumL2 / nL - (sumL / nL) ** 2, 0.0)
        impR = np.maximum(sumR2 / nR - (sumR / nR) ** 2, 0.0)

    gains = parent - (nL * impL + nR * impR) / float(n)
    gains = np.where(valid, gains, -np.inf)

    best_pos = np.argmax(gains, axis=0)            # first max: lowest threshold
    col_gain = gains[best_pos, np.arange(len(cols))]
    j = int(np.argmax(col_gain))                   # first max: lowest feature index
    if not (col_gain[j] > 0.0) or not np.isfinite(col_gain[j]):
        return None
    pos = int(best_pos[j])
    threshold = float((sv[pos, j] + sv[pos + 1, j]) / 2.0)
    return SplitRule(feature=int(cols[j]), threshold=threshold, gain=float(col_gain[j]))


def _is_pure(y: np.ndarray, kind: str) -> bool:
    if len(y) == 0:
        return True
    if kind == "classify":
        return bool((y == y[0]).all())
    return bool(np.var(y.astype(np.float64)) <= 0.0)


def _make_leaf(y: np.ndarray, kind: str, n_classes: int) -> Node:
    node = Node(samples=len(y))
    if kind == "classify":
        counts = np.bincount(y.astype(np.int64), minlength=n_classes).astype(np.float64)
        node.distribution = counts / counts.sum()
    else:
        node.value = float(np.mean(y.astype(np.float64)))
    return node


def _build_tree(X, y, rng, params: Hyperparams, kind: str, n_classes: int,
                importances: np.ndarray, n_train: int) -> Node:
    d = X.shape[1]
    m = params.resolve_max_features(d, kind)
    root_idx = np.arange(len(y))
    root = Node(samples=len(y))
    # stack entries: (node, row indices, depth); left child pushed last so it
    # is expanded first (pre-order, left before right) for stable rng use
    stack = [(root, root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        rows_y = y[idx]
        depth_blocked = params.max_depth is not None and depth >= params.max_depth
        if (len(idx) < params.min_samples_split or depth_blocked
                or _is_pure(rows_y, kind)):
            leaf = _make_leaf(rows_y, kind, n_classes)
            _copy_into(node, leaf)
            continue
        feats = None
        if m < d:
            feats = rng.sample_without_replacement(d, m)
        rule = best_split(X[idx], rows_y, kind, feats, n_classes)
        if rule is None:
            leaf = _make_leaf(rows_y, kind, n_classes)
            _copy_into(node, leaf)
            continue
        importances[rule.feature] += rule.gain * (len(idx) / n_train)
        mask = X[idx, rule.feature] <= rule.threshold
        left_idx, right_idx = idx[mask], idx[~mask]
        node.feature = rule.feature
        node.threshold = rule.threshold
        node.impurity_decrease = rule.gain
        node.left = Node(samples=len(left_idx))
        node.right = Node(samples=len(right_idx))
        stack.append((node.right, right_idx, depth + 1))
        stack.append((node.left, left_idx, depth + 1))
    return root


def _copy_into(node: Node, leaf: Node) -> None:
    node.value = leaf.value
    node.distribution = leaf.distribution


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    kind: str,
    feature_names: Sequence[str] | None = None,
    hyperparams: Hyperparams | None = None,
    seed: int = 0,
) -> ForestModel:
    from .rng import Rng

    params = hyperparams or Hyperparams()
    params.validate()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise ValidationError("X must be a non-empty 2D array")
    if not np.isfinite(X).all():
        raise ValidationError("X contains non-finite values")
    y = np.asarray(y)
    if len(y) != len(X):
        raise ValidationError("X and y length mismatch")
    n, d = X.shape
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(d)]
    if len(feature_names) != d:
        raise ValidationError("feature_names length does not match X columns")

    if kind == "classify":
        yf = np.asarray(y, dtype=np.float64)
        if not np.isfinite(yf).all() or not np.array_equal(yf, np.floor(yf)):
            raise ValidationError("classification targets must be integers")
        classes = sorted(int(v) for v in np.unique(yf))
        class_index = {c: i for i, c in enumerate(classes)}
        y_enc = np.asarray([class_index[int(v)] for v in yf], dtype=np.int64)
        n_classes = len(classes)
        y_range = None
    elif kind == "regress":
        y_enc = np.asarray(y, dtype=np.float64)
        if not np.isfinite(y_enc).all():
            raise ValidationError("regression targets must be finite")
        classes = []
        n_classes = 0
        y_range = (float(y_enc.min()), float(y_enc.max()))
    else:
        raise ValidationError(f"unknown kind {kind!r}")

    importances = np.zeros(d, dtype=np.float64)
    trees = []
    for i in range(params.n_estimators):
        rng = Rng(seed + i)
        if params.bootstrap:
            idx = (rng.u64_block(n) % np.uint64(n)).astype(np.int64)
            Xi, yi = X[idx], y_enc[idx]
        else:
            Xi, yi = X, y_enc
        trees.append(_build_tree(Xi, yi, rng, params, kind, n_classes,
                                 importances, n_train=n))

    total = importances.sum()
    degenerate = bool(total <= 0.0)
    if not degenerate:
        importances = importances / total
    return ForestModel(
        kind=kind, trees=trees, feature_names=list(feature_names), classes=classes,
        hyperparams=params, importances=importances, degenerate=degenerate,
        y_range=y_range, n_train=n, seed=seed)


def fit_classifier(X, y, **kwargs) -> ForestModel:
    return fit_forest(X, y, "classify", **kwargs)


def fit_regressor(X, y, **kwargs) -> ForestModel:
    return fit_forest(X, y, "regress", **kwargs)


def _apply_tree(root: Node, X: np.ndarray, assign) -> None:
    """Route all rows to leaves iteratively; call assign(leaf, row_indices)."""
    stack = [(root, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if len(idx) == 0:
            continue
        if node.is_leaf:
            assign(node, idx)
            continue
        mask = X[idx, node.feature] <= node.threshold
        stack.append((node.left, idx[mask]))
        stack.append((node.right, idx[~mask]))


def _check_matrix(model: ForestModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValidationError(
            f"expected {model.n_features} features, got {X.shape[1]}"
        )
    return X


def predict_proba(model: ForestModel, X) -> np.ndarray:
    """Class probabilities as vote fractions: each tree casts one vote for its
    leaf's majority class (ties to the lower class id)."""
    if model.kind != "classify":
        raise ValidationError("predict_proba requires a classification model")
    X = _check_matrix(model, X)
    n_classes = len(model.classes)
    votes = np.zeros((len(X), n_classes), dtype=np.float64)

    def assign(leaf: Node, idx: np.ndarray) -> None:
        votes[idx, int(np.argmax(leaf.distribution))] += 1.0

    for root in model.trees:
        _apply_tree(root, X, assign)
    return votes / len(model.trees)


def predict(model: ForestModel, X) -> np.ndarray:
    X = _check_matrix(model, X)
    if model.kind == "classify":
        proba = predict_proba(model, X)
        winners = np.argmax(proba, axis=1)  # first max: lower class id
        return np.asarray([model.classes[w] for w in winners], dtype=np.int64)
    acc = np.zeros(len(X), dtype=np.float64)

    def assign(leaf: Node, idx: np.ndarray) -> None:
        acc[idx] += leaf.value

    for root in model.trees:
        _apply_tree(root, X, assign)
    return acc / len(model.trees)


@dataclass(frozen=True)
class ImportanceReport:
    entries: list[tuple[str, float]]  # (feature name, share), descending
    degenerate: bool


def feature_importances(model: ForestModel) -> ImportanceReport:
    imps = model.importances
    if imps is None:
        raise ValidationError("model has no importances recorded")
    order = sorted(range(len(imps)), key=lambda i: (-imps[i], i))
    entries = [(model.feature_names[i], float(imps[i])) for i in order]
    return ImportanceReport(entries=entries, degenerate=model.degenerate)


# -- persistence -------------------------------------------------------------

def _node_list(root: Node, kind: str) -> list[dict]:
    """Breadth-first node array; children referenced by array index."""
    nodes: list[Node] = [root]
    order: list[dict] = []
    index = {id(root): 0}
    cursor = 0
    while cursor < len(nodes):
        node = nodes[cursor]
        cursor += 1
        for child in (node.left, node.right):
            if child is not None:
                index[id(child)] = len(nodes)
                nodes.append(child)
        entry = {
            "feature": node.feature,
            "threshold": node.threshold,
            "left": index[id(node.left)] if node.left else None,
            "right": index[id(node.right)] if node.right else None,
            "samples": node.samples,
            "impurity_decrease": node.impurity_decrease,
        }
        if kind == "classify":
            entry["distribution"] = (
                [float(v) for v in node.distribution]
                if node.distribution is not None else None)
        else:
            entry["value"] = node.value
        order.append(entry)
    return order


def _nodes_from_list(entries: list[dict], kind: str) -> Node:
    nodes = []
    for e in entries:
        node = Node(samples=int(e["samples"]))
        node.feature = e["feature"]
        node.threshold = e["threshold"]
        node.impurity_decrease = float(e.get("impurity_decrease", 0.0))
        if kind == "classify":
            dist = e.get("distribution")
            node.distribution = (np.asarray(dist, dtype=np.float64)
                                 if dist is not None else None)
        else:
            node.value = e.get("value")
        nodes.append(node)
    for e, node in zip(entries, nodes):
        if e["left"] is not None:
            node.left = nodes[e["left"]]
        if e["right"] is not None:
            node.right = nodes[e["right"]]
    return nodes[0]


def model_to_dict(model: ForestModel) -> dict:
    hp = model.hyperparams
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "feature_names": model.feature_names,
        "classes": model.classes,
        "hyperparams": {
            "n_estimators": hp.n_estimators,
            "max_depth": hp.max_depth,
            "min_samples_split": hp.min_samples_split,
            "max_features": hp.max_features,
            "bootstrap": hp.bootstrap,
        },
        "n_train": model.n_train,
        "seed": model.seed,
        "y_range": list(model.y_range) if model.y_range else None,
        "degenerate": model.degenerate,
        "importances": ([float(v) for v in model.importances]
                        if model.importances is not None else None),
        "trees": [{"nodes": _node_list(root, model.kind)} for root in model.trees],
    }


def model_from_dict(doc: dict) -> ForestModel:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ParseError("not a forest model file")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionError(
            f"unsupported forest model version {doc.get('version')!r}, "
            f"this build reads version {FORMAT_VERSION}"
        )
    try:
        hp_doc = doc["hyperparams"]
        mf = hp_doc["max_features"]
        params = Hyperparams(
            n_estimators=int(hp_doc["n_estimators"]),
            max_depth=hp_doc["max_depth"],
            min_samples_split=int(hp_doc["min_samples_split"]),
            max_features=mf,
            bootstrap=bool(hp_doc["bootstrap"]),
        )
        kind = doc["kind"]
        trees = [_nodes_from_list(t["nodes"], kind) for t in doc["trees"]]
        imps = doc.get("importances")
        return ForestModel(
            kind=kind,
            trees=trees,
            feature_names=list(doc["feature_names"]),
            classes=[int(c) for c in doc.get("classes", [])],
            hyperparams=params,
            importances=np.asarray(imps, dtype=np.float64) if imps is not None else None,
            degenerate=bool(doc.get("degenerate", False)),
            y_range=tuple(doc["y_range"]) if doc.get("y_range") else None,
            n_train=int(doc.get("n_train", 0)),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"malformed forest model: {exc!r}") from exc


def save_model(model: ForestModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str) -> ForestModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"bad model JSON at line {exc.lineno} col {exc.colno}: {exc.msg}"
            ) from exc
    return model_from_dict(doc)
