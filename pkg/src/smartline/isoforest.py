"""Isolation forest anomaly scoring, written against numpy only.

Scoring follows the standard construction: t random binary trees, each grown
on a subsample of psi rows drawn without replacement, splitting on a uniform
random value strictly between the node minimum and maximum of a uniformly
chosen non-constant feature, until the height limit ceil(log2(psi)), a
single-row node, or an all-identical node. A row's path length in a tree is
the depth reached plus c(size) of the external node it lands in, where

    c(n) = 0 for n <= 1
    c(2) = 1
    c(n) = 2 * (ln(n - 1) + 0.5772156649) - 2 * (n - 1) / n   otherwise

and the anomaly score is s = 2 ** (-E[h] / c(psi)). On identical data every
tree degenerates to a single external node, making every score exactly 0.5.

The flagging threshold is calibrated from the training scores: with
contamination q in (0, 0.5], the threshold is the ceil(q * n)-th largest
training score and a reading is flagged when score >= threshold, so ties at
the threshold may flag more than q * n rows (never fewer).

Left child receives rows with value < split, right child value >= split.
Tree i draws from the substream seeded seed + i, consuming, per internal
node, one index draw for the feature choice and one float draw for the split.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import AnomalyAlert, SensorReading, metric_order
from .errors import (
    InsufficientDataError,
    ParseError,
    SchemaMismatchError,
    ValidationError,
    VersionError,
)
from .rng import Rng

EULER_GAMMA = 0.5772156649

FORMAT_NAME = "smartline-isoforest"
FORMAT_VERSION = 1

SEVERITY_BANDS = ("info", "warn", "critical")


def c_factor(n: int | float) -> float:
    """Expected path length of an unsuccessful BST search among n points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1.0) + EULER_GAMMA) - 2.0 * (n - 1.0) / n


class IsoNode:
    __slots__ = ("feature", "split_value", "left", "right", "size")

    def __init__(self, size: int):
        self.feature: int | None = None
        self.split_value: float | None = None
        self.left: "IsoNode | None" = None
        self.right: "IsoNode | None" = None
        self.size = size

    @property
    def is_external(self) -> bool:
        return self.feature is None


@dataclass
class IsolationModel:
    trees: list[IsoNode]
    feature_names: list[str]
    subsample: int          # configured psi
    psi_eff: int            # min(psi, n_train), used for normalization
    contamination: float
    threshold: float
    train_mean: np.ndarray
    train_std: np.ndarray
    seed: int = 0

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def _grow(X: np.ndarray, idx: np.ndarray, rng: Rng, height_limit: int) -> IsoNode:
    node = IsoNode(size=len(idx))
    stack = [(node, idx, 0)]
    while stack:
        cur, rows, depth = stack.pop()
        if depth >= height_limit or len(rows) <= 1:
            continue
        sub = X[rows]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        valid = np.nonzero(lo < hi)[0]
        if len(valid) == 0:
            continue  # all rows identical on every feature: external node
        f = int(valid[rng.randint_below(len(valid))])
        u = rng.next_float()
        if u == 0.0:
            u = 0.5
        split = float(lo[f] + u * (hi[f] - lo[f]))
        if not (lo[f] < split < hi[f]):
            split = float((lo[f] + hi[f]) / 2.0)
            if not (lo[f] < split < hi[f]):
                continue  # degenerate float spacing, treat as external
        mask = sub[:, f] < split
        left_rows, right_rows = rows[mask], rows[~mask]
        cur.feature = f
        cur.split_value = split
        cur.left = IsoNode(size=len(left_rows))
        cur.right = IsoNode(size=len(right_rows))
        stack.append((cur.left, left_rows, depth + 1))
        stack.append((cur.right, right_rows, depth + 1))
    return node


def fit_isoforest(
    X: np.ndarray,
    n_trees: int = 100,
    subsample: int = 256,
    contamination: float = 0.01,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
) -> IsolationModel:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ValidationError("X must be 2D with at least 2 rows")
    if not np.isfinite(X).all():
        raise ValidationError("X contains non-finite values")
    if not (0.0 < contamination <= 0.5):
        raise ValidationError("contamination must be in (0, 0.5]")
    if n_trees < 1 or subsample < 2:
        raise ValidationError("need n_trees >= 1 and subsample >= 2")
    n, d = X.shape
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(d)]
    if len(feature_names) != d:
        raise ValidationError("feature_names length does not match X columns")

    psi_eff = min(subsample, n)
    height_limit = math.ceil(math.log2(psi_eff))
    trees = []
    for i in range(n_trees):
        rng = Rng(seed + i)
        idx = rng.sample_without_replacement(n, psi_eff)
        trees.append(_grow(X, idx, rng, height_limit))

    model = IsolationModel(
        trees=trees, feature_names=list(feature_names), subsample=subsample,
        psi_eff=psi_eff, contamination=contamination, threshold=0.0,
        train_mean=X.mean(axis=0), train_std=X.std(axis=0), seed=seed)
    scores = score_batch(model, X)
    model.threshold = threshold_from_contamination(scores, contamination)
    return model


def threshold_from_contamination(scores: Iterable[float], q: float) -> float:
    """The ceil(q*n)-th largest score; flag rule is score >= threshold."""
    if not (0.0 < q <= 0.5):
        raise ValidationError("contamination must be in (0, 0.5]")
    arr = np.sort(np.asarray(list(scores), dtype=np.float64))[::-1]
    if len(arr) == 0:
        raise InsufficientDataError("no scores to calibrate a threshold from")
    k = math.ceil(q * len(arr))
    return float(arr[k - 1])


def _check_features(model: IsolationModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise SchemaMismatchError(
            f"expected {model.n_features} features, got {X.shape[1]}"
        )
    return X


def path_lengths(root: IsoNode, X: np.ndarray) -> np.ndarray:
    """Per-row path length h in one tree (depth + c(external size))."""
    h = np.zeros(len(X), dtype=np.float64)
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if len(idx) == 0:
            continue
        if node.is_external:
            h[idx] = depth + c_factor(node.size)
            continue
        mask = X[idx, node.feature] < node.split_value
        stack.append((node.left, idx[mask], depth + 1))
        stack.append((node.right, idx[~mask], depth + 1))
    return h


def score_batch(model: IsolationModel, X) -> np.ndarray:
    X = _check_features(model, X)
    total = np.zeros(len(X), dtype=np.float64)
    for root in model.trees:
        total += path_lengths(root, X)
    mean_h = total / len(model.trees)
    return np.exp2(-mean_h / c_factor(model.psi_eff))


def score_row(model: IsolationModel, row: Sequence[float]) -> float:
    """Single-row score on the scalar path (no array overhead); matches
    score_batch bit for bit because tree order and arithmetic are identical
    (np.exp2 resolves to the same ufunc for scalars and arrays)."""
    total = 0.0
    for root in model.trees:
        node = root
        depth = 0
        while not node.is_external:
            node = node.left if row[node.feature] < node.split_value else node.right
            depth += 1
        total += depth + c_factor(node.size)
    mean_h = total / len(model.trees)
    return float(np.exp2(-mean_h / c_factor(model.psi_eff)))


def severity_band(score: float, threshold: float) -> str:
    """Tertiles of [threshold, 1]: info, warn, critical."""
    span = 1.0 - threshold
    if span <= 0.0:
        return "critical"
    x = score - threshold
    if x < span / 3.0:
        return "info"
    if x < 2.0 * span / 3.0:
        return "warn"
    return "critical"


def reading_vector(reading: SensorReading, feature_names: Sequence[str]) -> list[float]:
    try:
        return [float(reading.values[m]) for m in feature_names]
    except KeyError as exc:
        raise SchemaMismatchError(
            f"reading at tick {reading.tick} lacks metric {exc.args[0]!r}"
        ) from exc


class _RollingStats:
    """Trailing per-feature mean/std over the last `window` observed rows."""

    def __init__(self, n_features: int, window: int):
        self.window = window
        self.rows: deque[list[float]] = deque(maxlen=window)

    def push(self, row: Sequence[float]) -> None:
        self.rows.append(list(row))

    def stats(self) -> tuple[np.ndarray, np.ndarray] | None:
        if len(self.rows) < 2:
            return None
        arr = np.asarray(self.rows, dtype=np.float64)
        return arr.mean(axis=0), arr.std(axis=0)


def _build_alert(model: IsolationModel, reading: SensorReading, row: Sequence[float],
                 score: float, rolling: _RollingStats,
                 category: str = "machine") -> AnomalyAlert:
    stats = rolling.stats()
    if stats is None:
        mean, std = model.train_mean, model.train_std
    else:
        mean, std = stats
    deviations: dict[str, float] = {}
    top_metric = model.feature_names[0]
    top_abs = -1.0
    for j, metric in enumerate(model.feature_names):
        sigma = std[j] if std[j] > 0 else float(model.train_std[j])
        z = (row[j] - mean[j]) / sigma if sigma > 0 else 0.0
        deviations[metric] = float(z)
        if abs(z) > top_abs:
            top_abs = abs(z)
            top_metric = metric
    return AnomalyAlert(
        machine=reading.machine, tick=reading.tick,
        timestamp_ms=reading.timestamp_ms, score=float(score),
        severity=severity_band(score, model.threshold),
        top_metric=top_metric, deviations=deviations, category=category)


def detect_one(model: IsolationModel, reading: SensorReading,
               rolling: _RollingStats, category: str = "machine") -> AnomalyAlert | None:
    """Score one reading and return an alert when it meets the threshold.

    The rolling stats are updated with the reading after scoring, so a
    reading's deviation is always measured against strictly earlier data.
    """
    row = reading_vector(reading, model.feature_names)
    score = score_row(model, row)
    alert = None
    if score >= model.threshold:
        alert = _build_alert(model, reading, row, score, rolling, category)
    rolling.push(row)
    return alert


def detect_stream(model: IsolationModel, readings: Sequence[SensorReading],
                  deviation_window: int = 100,
                  category: str = "machine") -> list[AnomalyAlert]:
    """Alerts for every flagged reading in the window, in stream order."""
    rolling = _RollingStats(model.n_features, deviation_window)
    alerts = []
    for reading in readings:
        alert = detect_one(model, reading, rolling, category)
        if alert is not None:
            alerts.append(alert)
    return alerts


class StreamingDetector:
    """Continuous detection against a trailing training window.

    The model is fitted once `min_train` readings have arrived and refitted
    every `refit_every` readings on the most recent `train_window` rows. The
    swap is atomic: scoring uses the old model until the new one is fully
    built. Refit k derives its seed from the substream name "refit-k" so
    every refit is deterministic and distinct.
    """

    def __init__(
        self,
        feature_names: Sequence[str],
        train_window: int = 5000,
        refit_every: int = 1000,
        min_train: int = 512,
        n_trees: int = 100,
        subsample: int = 256,
        contamination: float = 0.01,
        seed: int = 0,
        deviation_window: int = 100,
    ):
        if refit_every < 1 or train_window < 2 or min_train < 2:
            raise ValidationError("bad streaming detector configuration")
        self.feature_names = list(feature_names)
        self.train_window = train_window
        self.refit_every = refit_every
        self.min_train = min_train
        self.n_trees = n_trees
        self.subsample = subsample
        self.contamination = contamination
        self.seed = seed
        self.model: IsolationModel | None = None
        self._buffer: deque[list[float]] = deque(maxlen=train_window)
        self._rolling = _RollingStats(len(self.feature_names), deviation_window)
        self._since_fit = 0
        self._refits = 0

    def _refit(self) -> None:
        X = np.asarray(self._buffer, dtype=np.float64)
        fit_seed = Rng.for_stream(self.seed, f"refit-{self._refits}").seed
        self.model = fit_isoforest(
            X, n_trees=self.n_trees, subsample=self.subsample,
            contamination=self.contamination, seed=fit_seed,
            feature_names=self.feature_names)
        self._refits += 1
        self._since_fit = 0

    def observe(self, reading: SensorReading) -> AnomalyAlert | None:
        row = reading_vector(reading, self.feature_names)
        self._buffer.append(row)
        self._since_fit += 1
        if self.model is None:
            if len(self._buffer) >= self.min_train:
                self._refit()
            self._rolling.push(row)
            return None
        if self._since_fit >= self.refit_every:
            self._refit()
        score = score_row(self.model, row)
        alert = None
        if score >= self.model.threshold:
            alert = _build_alert(self.model, reading, row, score, self._rolling)
        self._rolling.push(row)
        return alert


# -- persistence -------------------------------------------------------------

def _iso_node_list(root: IsoNode) -> list[dict]:
    nodes = [root]
    out = []
    index = {id(root): 0}
    cursor = 0
    while cursor < len(nodes):
        node = nodes[cursor]
        cursor += 1
        for child in (node.left, node.right):
            if child is not None:
                index[id(child)] = len(nodes)
                nodes.append(child)
        out.append({
            "feature": node.feature,
            "split_value": node.split_value,
            "left": index[id(node.left)] if node.left else None,
            "right": index[id(node.right)] if node.right else None,
            "size": node.size,
        })
    return out


def _iso_nodes_from_list(entries: list[dict]) -> IsoNode:
    nodes = []
    for e in entries:
        node = IsoNode(size=int(e["size"]))
        node.feature = e["feature"]
        node.split_value = e["split_value"]
        nodes.append(node)
    for e, node in zip(entries, nodes):
        if e["left"] is not None:
            node.left = nodes[e["left"]]
        if e["right"] is not None:
            node.right = nodes[e["right"]]
    return nodes[0]


def model_to_dict(model: IsolationModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "feature_names": model.feature_names,
        "subsample": model.subsample,
        "psi_eff": model.psi_eff,
        "contamination": model.contamination,
        "threshold": model.threshold,
        "seed": model.seed,
        "train_mean": [float(v) for v in model.train_mean],
        "train_std": [float(v) for v in model.train_std],
        "trees": [{"nodes": _iso_node_list(root)} for root in model.trees],
    }


def model_from_dict(doc: dict) -> IsolationModel:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ParseError("not an isolation model file")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionError(
            f"unsupported isolation model version {doc.get('version')!r}"
        )
    try:
        return IsolationModel(
            trees=[_iso_nodes_from_list(t["nodes"]) for t in doc["trees"]],
            feature_names=list(doc["feature_names"]),
            subsample=int(doc["subsample"]),
            psi_eff=int(doc["psi_eff"]),
            contamination=float(doc["contamination"]),
            threshold=float(doc["threshold"]),
            train_mean=np.asarray(doc["train_mean"], dtype=np.float64),
            train_std=np.asarray(doc["train_std"], dtype=np.float64),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"malformed isolation model: {exc!r}") from exc


def save_model(model: IsolationModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str) -> IsolationModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"bad model JSON at line {exc.lineno} col {exc.colno}: {exc.msg}"
            ) from exc
    return model_from_dict(doc)
