"""Predictive maintenance: windowed features, failure-risk model, insights.

The risk model is a classifier over FeatureWindow vectors: per metric the
window mean, population standard deviation, and least-squares slope over the
trailing `window` readings. Labels come from the simulator's ground-truth
crossings: a window ending at tick t is positive when its machine's degraded
metric first reaches the failure threshold within the next `horizon` ticks.

Risk bands and scheduling: risk >= 0.7 is High priority, scheduled one day
out; 0.4 <= risk < 0.7 is Medium, two days out; below 0.4 is Low, three days
out and reported only when include_low is set.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import CANONICAL_MACHINES, METRICS, SensorReading
from .errors import (
    InsufficientDataError,
    SchemaMismatchError,
    TrainingError,
    ValidationError,
)
from .forest import ForestModel, Hyperparams, fit_classifier, predict_proba
from .plantsim import LabeledDataset
from .rng import Rng

log = logging.getLogger(__name__)

WINDOW_DEFAULT = 60
HORIZON_DEFAULT = 20
FEATURE_STATS = ("mean", "std", "slope")

# Metrics every default profile carries; the shared schema for one risk model
# across heterogeneous machines.
RISK_METRICS_DEFAULT = ("Temperature", "VibrationLevel", "MachineLoad",
                        "PowerLoad", "GridUsage")

FALLBACK_TASK = "Inspect Machine"

DAY_MS = 86_400_000
PRIORITY_BANDS = (("High", 0.7, 1), ("Medium", 0.4, 2), ("Low", 0.0, 3))


def window_feature_names(metrics: Sequence[str]) -> list[str]:
    return [f"{metric}:{stat}" for metric in metrics for stat in FEATURE_STATS]


def slope_of(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of y against x; exact 0 for constant y."""
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        return 0.0
    return float(np.dot(xc, y) / denom)


@dataclass(frozen=True)
class FeatureWindow:
    machine: str
    end_tick: int
    window: int
    stats: Mapping[str, tuple[float, float, float]]  # metric -> (mean, std, slope)

    def to_vector(self, feature_names: Sequence[str]) -> np.ndarray:
        out = np.empty(len(feature_names), dtype=np.float64)
        for i, name in enumerate(feature_names):
            metric, _, stat = name.partition(":")
            if metric not in self.stats or stat not in FEATURE_STATS:
                raise SchemaMismatchError(
                    f"window for {self.machine} lacks feature {name!r}"
                )
            out[i] = self.stats[metric][FEATURE_STATS.index(stat)]
        return out


def extract_features(readings: Sequence[SensorReading],
                     window: int = WINDOW_DEFAULT) -> FeatureWindow:
    """FeatureWindow over the trailing `window` readings of one machine."""
    if len(readings) < 2:
        raise InsufficientDataError("need at least 2 readings for a feature window")
    tail = readings[-window:]
    machine = tail[0].machine
    if any(r.machine != machine for r in tail):
        raise ValidationError("feature window mixes readings from several machines")
    ticks = np.asarray([r.tick for r in tail], dtype=np.float64)
    stats = {}
    for metric in tail[0].values:
        y = np.asarray([r.values[metric] for r in tail], dtype=np.float64)
        stats[metric] = (float(y.mean()), float(y.std()), slope_of(ticks, y))
    return FeatureWindow(machine=machine, end_tick=tail[-1].tick,
                         window=len(tail), stats=stats)


@dataclass
class WindowDataset:
    feature_names: list[str]
    X: np.ndarray
    y: np.ndarray
    machines: list[str]
    end_ticks: np.ndarray


def build_window_dataset(dataset: LabeledDataset, window: int = WINDOW_DEFAULT,
                         metrics: Sequence[str] | None = None) -> WindowDataset:
    """Sliding-window feature matrix over every machine stream in the dataset.

    Windows advance one tick at a time; a row exists for every end tick from
    window-1 onward. Labels follow the dataset's crossing rule evaluated at
    the window end tick.
    """
    if window < 2:
        raise ValidationError("window must be >= 2")
    metrics = list(metrics if metrics is not None else
                   [m for m in RISK_METRICS_DEFAULT if m in dataset.feature_names])
    missing = [m for m in metrics if m not in dataset.feature_names]
    if missing:
        raise SchemaMismatchError(f"dataset lacks metrics {missing}")
    names = window_feature_names(metrics)

    streams: dict[str, list[SensorReading]] = {}
    for reading in dataset.readings:
        streams.setdefault(reading.machine, []).append(reading)
    crossings: dict[str, list[int]] = {}
    for event in dataset.crossings:
        crossings.setdefault(event.machine, []).append(event.tick)

    horizon = dataset.horizon
    xs, ys, machines, end_ticks = [], [], [], []
    # relative offsets are enough for the slope because ticks are contiguous
    offsets = np.arange(window, dtype=np.float64)
    xc = offsets - offsets.mean()
    denom = float(np.dot(xc, xc))
    for machine, readings in streams.items():
        if len(readings) < window:
            continue
        ticks = np.asarray([r.tick for r in readings], dtype=np.int64)
        per_metric = {
            m: np.asarray([r.values[m] for r in readings], dtype=np.float64)
            for m in metrics
        }
        views = {m: np.lib.stride_tricks.sliding_window_view(v, window)
                 for m, v in per_metric.items()}
        n_win = len(readings) - window + 1
        feats = np.empty((n_win, len(names)), dtype=np.float64)
        for j, m in enumerate(metrics):
            view = views[m]
            feats[:, 3 * j] = view.mean(axis=1)
            feats[:, 3 * j + 1] = view.std(axis=1)
            feats[:, 3 * j + 2] = (view * xc).sum(axis=1) / denom
        wend = ticks[window - 1:]
        labels = np.zeros(n_win, dtype=np.int64)
        for c in crossings.get(machine, ()):
            labels |= (wend < c) & (c - wend <= horizon)
        xs.append(feats)
        ys.append(labels)
        machines.extend([machine] * n_win)
        end_ticks.append(wend)

    if not xs:
        raise InsufficientDataError("no machine stream long enough for a window")
    return WindowDataset(
        feature_names=names,
        X=np.vstack(xs),
        y=np.concatenate(ys),
        machines=machines,
        end_ticks=np.concatenate(end_ticks),
    )


@dataclass
class RiskTrainingReport:
    model: ForestModel
    precision: float
    recall: float
    n_train: int
    n_test: int
    test_positives: int


def _stratified_split(y: np.ndarray, test_fraction: float, seed: int):
    rng = Rng.for_stream(seed, "risk-split")
    test_idx, train_idx = [], []
    for cls in np.unique(y):
        members = np.nonzero(y == cls)[0]
        perm = members[rng.shuffled(len(members))]
        n_test = max(1, int(round(test_fraction * len(members))))
        if n_test >= len(members):
            raise TrainingError(
                f"class {cls} has too few rows ({len(members)}) for the split"
            )
        test_idx.append(perm[:n_test])
        train_idx.append(perm[n_test:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def train_risk_model(
    dataset: LabeledDataset,
    window: int = WINDOW_DEFAULT,
    test_fraction: float = 0.2,
    seed: int = 0,
    hyperparams: Hyperparams | None = None,
    metrics: Sequence[str] | None = None,
) -> RiskTrainingReport:
    """Fit the failure classifier on windowed features with a seeded,
    stratified train/test split, and report held-out precision and recall
    at the fixed 0.5 probability threshold."""
    if not (0.0 < test_fraction < 1.0):
        raise ValidationError("test_fraction must be in (0, 1)")
    wd = build_window_dataset(dataset, window, metrics)
    classes = np.unique(wd.y)
    if len(classes) < 2:
        raise TrainingError(
            "training data has a single class; configure degradations so the "
            "positive class is populated"
        )
    train_idx, test_idx = _stratified_split(wd.y, test_fraction, seed)
    model = fit_classifier(
        wd.X[train_idx], wd.y[train_idx], feature_names=wd.feature_names,
        hyperparams=hyperparams, seed=seed)
    proba = predict_proba(model, wd.X[test_idx])
    fail_col = model.classes.index(1)
    predicted = proba[:, fail_col] >= 0.5
    actual = wd.y[test_idx] == 1
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    return RiskTrainingReport(
        model=model, precision=precision, recall=recall,
        n_train=len(train_idx), n_test=len(test_idx),
        test_positives=int(actual.sum()))


@dataclass(frozen=True)
class RiskAssessment:
    machine: str
    risk: float


def assess_risk(model: ForestModel, windows: Iterable[FeatureWindow]) -> list[RiskAssessment]:
    """P(failure within horizon) per machine, sorted by descending risk."""
    if 1 not in model.classes:
        # a model trained without positive examples can only ever say "healthy"
        fail_col = None
    else:
        fail_col = model.classes.index(1)
    rank = {m: i for i, m in enumerate(CANONICAL_MACHINES)}
    rows = []
    for fw in windows:
        vec = fw.to_vector(model.feature_names)
        if fail_col is None:
            risk = 0.0
        else:
            risk = float(predict_proba(model, vec[None, :])[0, fail_col])
        rows.append(RiskAssessment(machine=fw.machine, risk=risk))
    rows.sort(key=lambda r: (-r.risk, rank.get(r.machine, 99), r.machine))
    return rows


def top_drift_metric(fw: FeatureWindow) -> str:
    """The metric whose trend dominates its own short-term noise.

    Drift dominance is |slope| * window / (std + eps): the total movement
    across the window measured in units of in-window scatter. Ties resolve in
    canonical metric order.
    """
    best, best_score = None, -1.0
    for metric in METRICS:
        if metric not in fw.stats:
            continue
        _, std, slope = fw.stats[metric]
        score = abs(slope) * fw.window / (std + 1e-9)
        if score > best_score:
            best, best_score = metric, score
    return best


class ReasonCatalog:
    """Maps (machine, top feature) to a human reason and a task."""

    def __init__(self, doc: dict):
        if doc.get("version") != 1:
            raise ValidationError(f"unsupported catalog version {doc.get('version')!r}")
        self.reason_tasks: dict[str, str] = dict(doc["reason_tasks"])
        self.metric_reasons: dict[str, str] = dict(doc.get("metric_reasons", {}))
        self.machine_overrides: dict[str, dict[str, str]] = {
            m: dict(v) for m, v in doc.get("machine_overrides", {}).items()
        }

    @classmethod
    def default(cls) -> "ReasonCatalog":
        raw = resources.files("smartline.data").joinpath("reason_catalog.json").read_text()
        return cls(json.loads(raw))

    @classmethod
    def load(cls, path: str) -> "ReasonCatalog":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def reason_for(self, machine: str, metric: str) -> str:
        override = self.machine_overrides.get(machine, {})
        if metric in override:
            return override[metric]
        if "*" in override:
            return override["*"]
        return self.metric_reasons.get(metric, "Unidentified Degradation")

    def task_for(self, reason: str) -> str:
        task = self.reason_tasks.get(reason)
        if task is None:
            log.warning("no task for reason %r, falling back to %r", reason,
                        FALLBACK_TASK)
            return FALLBACK_TASK
        return task


@dataclass(frozen=True)
class MaintenanceInsight:
    task: str
    priority: str
    reason: str
    machine: str
    scheduled_ms: int
    risk: float

    @property
    def scheduled_date(self) -> str:
        dt = datetime.fromtimestamp(self.scheduled_ms / 1000.0, tz=timezone.utc)
        return dt.strftime("%Y-%m-%d %H:%M:%S")

    def to_row(self) -> list:
        """Column order matches the dashboard table: Task, Priority, Reason,
        MachineID, Scheduled Date."""
        return [self.task, self.priority, self.reason, self.machine,
                self.scheduled_date]

    def to_payload(self) -> dict:
        return {
            "task": self.task,
            "priority": self.priority,
            "reason": self.reason,
            "machine": self.machine,
            "scheduled_ms": self.scheduled_ms,
            "scheduled_date": self.scheduled_date,
            "risk": round(self.risk, 6),
        }


INSIGHT_COLUMNS = ["Task", "Priority", "Reason", "MachineID", "Scheduled Date"]


def generate_insights(
    assessments: Sequence[RiskAssessment],
    top_metrics: Mapping[str, str],
    now_ms: int,
    catalog: ReasonCatalog | None = None,
    include_low: bool = False,
) -> list[MaintenanceInsight]:
    """One insight per machine above the risk gate, highest risk first."""
    catalog = catalog or ReasonCatalog.default()
    insights = []
    for assessment in assessments:
        if not (0.0 <= assessment.risk <= 1.0):
            raise ValidationError(f"risk out of range: {assessment.risk}")
        priority, offset_days = None, None
        for name, gate, days in PRIORITY_BANDS:
            if assessment.risk >= gate:
                priority, offset_days = name, days
                break
        if priority == "Low" and not include_low:
            continue
        metric = top_metrics.get(assessment.machine)
        if metric is None:
            raise ValidationError(f"no top metric for {assessment.machine}")
        reason = catalog.reason_for(assessment.machine, metric)
        insights.append(MaintenanceInsight(
            task=catalog.task_for(reason),
            priority=priority,
            reason=reason,
            machine=assessment.machine,
            scheduled_ms=now_ms + offset_days * DAY_MS,
            risk=assessment.risk,
        ))
    return insights
