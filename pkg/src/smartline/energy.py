"""Energy forecasting, consumption anomalies, and energy-flow aggregation.

Forecasting is lag-based regression: the target PowerLoad at tick t is
predicted from its previous L values, the hour of day of t, and the t-1
values of MachineLoad, GridUsage, and BatteryCapacity, so every feature is a
pure function of data strictly before t. Multi-step forecasts iterate one
step at a time, appending each prediction to the lag vector; exogenous
covariates hold their last observed values while the clock (hour feature)
advances.

Flow aggregation settles each machine's energy over a window: the grid
supplies min(GridUsage, PowerLoad) and the plant battery covers the rest, so
every machine node balances by construction and the plant total equals the
raw sum of PowerLoad times tick hours.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CANONICAL_MACHINES, TICK_MS_DEFAULT, SensorReading
from .errors import (
    InsufficientDataError,
    ParseError,
    ValidationError,
    VersionError,
)
from . import forest
from .forest import ForestModel, Hyperparams, fit_regressor, predict

FORMAT_NAME = "smartline-energy"
FORMAT_VERSION = 1
LAGS_DEFAULT = 24

# Which production stage each machine's energy feeds.
PROCESS_STAGES: dict[str, str] = {
    "Coating Machine": "Electrode Preparation",
    "Electrolyte Filling Machine": "Cell Assembly",
    "Sealing Machine": "Cell Assembly",
    "Formation Equipment": "Formation & Aging",
    "Aging Chamber": "Formation & Aging",
    "AGV": "Material Handling",
}


@dataclass(frozen=True)
class EnergyPoint:
    tick: int
    timestamp_ms: int
    power_kw: float
    machine_load: float
    grid_kw: float
    battery_capacity: float


def machine_series(readings: Sequence[SensorReading], machine: str) -> list[EnergyPoint]:
    points = []
    for r in readings:
        if r.machine != machine:
            continue
        points.append(EnergyPoint(
            tick=r.tick, timestamp_ms=r.timestamp_ms,
            power_kw=float(r.values.get("PowerLoad", 0.0)),
            machine_load=float(r.values.get("MachineLoad", 0.0)),
            grid_kw=float(r.values.get("GridUsage", 0.0)),
            battery_capacity=float(r.values.get("BatteryCapacity", 0.0))))
    return points


def plant_series(readings: Sequence[SensorReading]) -> list[EnergyPoint]:
    """Plant-total series: PowerLoad and GridUsage summed per tick,
    MachineLoad and BatteryCapacity averaged over machines reporting them."""
    per_tick: dict[int, dict] = {}
    for r in readings:
        acc = per_tick.setdefault(r.tick, {
            "timestamp_ms": r.timestamp_ms, "power": 0.0, "grid": 0.0,
            "loads": [], "batteries": []})
        acc["power"] += float(r.values.get("PowerLoad", 0.0))
        acc["grid"] += float(r.values.get("GridUsage", 0.0))
        if "MachineLoad" in r.values:
            acc["loads"].append(float(r.values["MachineLoad"]))
        if "BatteryCapacity" in r.values:
            acc["batteries"].append(float(r.values["BatteryCapacity"]))
    points = []
    for tick in sorted(per_tick):
        acc = per_tick[tick]
        points.append(EnergyPoint(
            tick=tick, timestamp_ms=acc["timestamp_ms"], power_kw=acc["power"],
            machine_load=float(np.mean(acc["loads"])) if acc["loads"] else 0.0,
            grid_kw=acc["grid"],
            battery_capacity=(float(np.mean(acc["batteries"]))
                              if acc["batteries"] else 0.0)))
    return points


def hour_of_day(timestamp_ms: int) -> int:
    return int((timestamp_ms // 3_600_000) % 24)


def energy_feature_names(lags: int) -> list[str]:
    names = [f"PowerLoad:lag{k}" for k in range(1, lags + 1)]
    names += ["MachineLoad:prev", "HourOfDay", "GridUsage:prev",
              "BatteryCapacity:prev"]
    return names


def build_features(points: Sequence[EnergyPoint], lags: int = LAGS_DEFAULT):
    """Feature matrix and targets; row i predicts points[i] from history < i."""
    if lags < 1:
        raise ValidationError("lags must be >= 1")
    if len(points) <= lags:
        raise InsufficientDataError(
            f"need more than {lags} points, got {len(points)}"
        )
    names = energy_feature_names(lags)
    n = len(points) - lags
    X = np.empty((n, len(names)), dtype=np.float64)
    y = np.empty(n, dtype=np.float64)
    ticks = np.empty(n, dtype=np.int64)
    for row, i in enumerate(range(lags, len(points))):
        for k in range(1, lags + 1):
            X[row, k - 1] = points[i - k].power_kw
        prev = points[i - 1]
        X[row, lags] = prev.machine_load
        X[row, lags + 1] = hour_of_day(points[i].timestamp_ms)
        X[row, lags + 2] = prev.grid_kw
        X[row, lags + 3] = prev.battery_capacity
        y[row] = points[i].power_kw
        ticks[row] = points[i].tick
    return X, y, names, ticks


@dataclass
class EnergyModel:
    forest_model: ForestModel
    lags: int
    tick_ms: int
    peak_threshold_kw: float  # 90th percentile of training PowerLoad
    scope: str = "plant"      # "plant" or a machine name


def train_energy_model(
    points: Sequence[EnergyPoint],
    lags: int = LAGS_DEFAULT,
    seed: int = 0,
    hyperparams: Hyperparams | None = None,
    tick_ms: int = TICK_MS_DEFAULT,
    scope: str = "plant",
) -> EnergyModel:
    X, y, names, _ = build_features(points, lags)
    model = fit_regressor(X, y, feature_names=names, hyperparams=hyperparams,
                          seed=seed)
    return EnergyModel(
        forest_model=model, lags=lags, tick_ms=tick_ms,
        peak_threshold_kw=float(np.quantile(y, 0.9)), scope=scope)


@dataclass
class EnergyForecast:
    scope: str
    start_tick: int
    ticks: list[int]
    values_kw: list[float]
    peak_flags: list[bool]
    peak_threshold_kw: float

    def to_payload(self) -> dict:
        return {
            "scope": self.scope,
            "start_tick": self.start_tick,
            "ticks": list(self.ticks),
            "values_kw": [float(v) for v in self.values_kw],
            "peak_flags": list(self.peak_flags),
            "peak_threshold_kw": float(self.peak_threshold_kw),
        }


def forecast(model: EnergyModel, points: Sequence[EnergyPoint],
             horizon: int) -> EnergyForecast:
    """Iterated one-step forecast for `horizon` ticks past the last point.

    A step is flagged as a peak when its prediction strictly exceeds the
    model's training 90th percentile, so a perfectly flat history flags
    nothing.
    """
    if horizon < 1:
        raise ValidationError("horizon must be >= 1")
    if len(points) < model.lags:
        raise InsufficientDataError(
            f"need at least {model.lags} points of history, got {len(points)}"
        )
    lag_values = [p.power_kw for p in points[-model.lags:]]  # oldest..newest
    last = points[-1]
    names_len = model.lags + 4
    ticks, values, flags = [], [], []
    for step in range(1, horizon + 1):
        x = np.empty((1, names_len), dtype=np.float64)
        for k in range(1, model.lags + 1):
            x[0, k - 1] = lag_values[-k]
        x[0, model.lags] = last.machine_load
        x[0, model.lags + 1] = hour_of_day(last.timestamp_ms + step * model.tick_ms)
        x[0, model.lags + 2] = last.grid_kw
        x[0, model.lags + 3] = last.battery_capacity
        pred = float(predict(model.forest_model, x)[0])
        ticks.append(last.tick + step)
        values.append(pred)
        flags.append(pred > model.peak_threshold_kw)
        lag_values.append(pred)
        lag_values.pop(0)
    return EnergyForecast(
        scope=model.scope, start_tick=ticks[0], ticks=ticks, values_kw=values,
        peak_flags=flags, peak_threshold_kw=model.peak_threshold_kw)


def mape(y_true: Sequence[float], y_pred: Sequence[float],
         floor_kw: float = 0.1) -> float:
    """Mean absolute percentage error, skipping true values below floor_kw."""
    t = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if t.shape != p.shape:
        raise ValidationError("length mismatch between truth and prediction")
    mask = t >= floor_kw
    if not mask.any():
        raise InsufficientDataError("every true value is below the MAPE floor")
    return float(np.mean(np.abs((t[mask] - p[mask]) / t[mask])))


# -- consumption anomalies ----------------------------------------------------

def detect_energy_anomalies(points: Sequence[EnergyPoint], scope: str = "plant",
                            contamination: float = 0.01, seed: int = 0):
    """Isolation-forest pass over the PowerLoad series (self-calibrated)."""
    from . import isoforest

    if len(points) < 2:
        raise InsufficientDataError("need at least 2 points")
    X = np.asarray([[p.power_kw] for p in points], dtype=np.float64)
    model = isoforest.fit_isoforest(
        X, contamination=contamination, seed=seed, feature_names=["PowerLoad"])
    scores = isoforest.score_batch(model, X)
    alerts = []
    from .core import AnomalyAlert

    for point, score in zip(points, scores):
        if score >= model.threshold:
            sigma = float(model.train_std[0])
            z = (point.power_kw - float(model.train_mean[0])) / sigma if sigma > 0 else 0.0
            alerts.append(AnomalyAlert(
                machine=scope, tick=point.tick, timestamp_ms=point.timestamp_ms,
                score=float(score),
                severity=isoforest.severity_band(score, model.threshold),
                top_metric="PowerLoad", deviations={"PowerLoad": z},
                category="energy"))
    return alerts


# -- energy flows -------------------------------------------------------------

@dataclass(frozen=True)
class FlowEdge:
    source: str
    target: str
    energy_kwh: float

    def to_payload(self) -> dict:
        return {"source": self.source, "target": self.target,
                "energy_kwh": float(self.energy_kwh)}


def flow_aggregate(readings: Sequence[SensorReading],
                   tick_ms: int = TICK_MS_DEFAULT,
                   stages: dict[str, str] | None = None) -> list[FlowEdge]:
    """Sankey edges Grid/Battery -> machine -> process stage over a window."""
    stages = stages or PROCESS_STAGES
    hours = tick_ms / 3_600_000.0
    grid_in: dict[str, float] = {}
    battery_in: dict[str, float] = {}
    total: dict[str, float] = {}
    for r in readings:
        power = float(r.values.get("PowerLoad", 0.0))
        grid = float(r.values.get("GridUsage", 0.0))
        if power < 0 or grid < 0:
            raise ValidationError(
                f"negative energy value for {r.machine} at tick {r.tick}"
            )
        from_grid = min(grid, power)
        grid_in[r.machine] = grid_in.get(r.machine, 0.0) + from_grid * hours
        battery_in[r.machine] = (battery_in.get(r.machine, 0.0)
                                 + (power - from_grid) * hours)
        total[r.machine] = total.get(r.machine, 0.0) + power * hours

    rank = {m: i for i, m in enumerate(CANONICAL_MACHINES)}
    edges = []
    for machine in sorted(total, key=lambda m: (rank.get(m, 99), m)):
        stage = stages.get(machine)
        if stage is None:
            raise ValidationError(f"no process stage mapped for {machine!r}")
        if grid_in[machine] > 0:
            edges.append(FlowEdge("Grid", machine, grid_in[machine]))
        if battery_in[machine] > 0:
            edges.append(FlowEdge("Battery", machine, battery_in[machine]))
        edges.append(FlowEdge(machine, stage, total[machine]))
    return edges


def flow_balance(edges: Sequence[FlowEdge]) -> dict[str, tuple[float, float]]:
    """Node -> (inflow, outflow) for conservation checks."""
    balance: dict[str, list[float]] = {}
    for e in edges:
        balance.setdefault(e.source, [0.0, 0.0])[1] += e.energy_kwh
        balance.setdefault(e.target, [0.0, 0.0])[0] += e.energy_kwh
    return {k: (v[0], v[1]) for k, v in balance.items()}


def verify_conservation(edges: Sequence[FlowEdge], rel_tol: float = 1e-6) -> None:
    """Every intermediate (machine) node must balance within rel_tol."""
    balance = flow_balance(edges)
    for machine in CANONICAL_MACHINES:
        if machine not in balance:
            continue
        inflow, outflow = balance[machine]
        scale = max(abs(inflow), abs(outflow), 1e-12)
        if abs(inflow - outflow) > rel_tol * scale:
            raise ValidationError(
                f"flow imbalance at {machine}: in {inflow} out {outflow}"
            )


def plant_total_kwh(edges: Sequence[FlowEdge]) -> float:
    """Sum of machine -> stage edges (equals raw PowerLoad integral)."""
    return sum(e.energy_kwh for e in edges if e.source in PROCESS_STAGES)


# -- persistence -------------------------------------------------------------

def model_to_dict(model: EnergyModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "lags": model.lags,
        "tick_ms": model.tick_ms,
        "peak_threshold_kw": model.peak_threshold_kw,
        "scope": model.scope,
        "forest": forest.model_to_dict(model.forest_model),
    }


def model_from_dict(doc: dict) -> EnergyModel:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ParseError("not an energy model file")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionError(f"unsupported energy model version {doc.get('version')!r}")
    try:
        return EnergyModel(
            forest_model=forest.model_from_dict(doc["forest"]),
            lags=int(doc["lags"]),
            tick_ms=int(doc["tick_ms"]),
            peak_threshold_kw=float(doc["peak_threshold_kw"]),
            scope=doc.get("scope", "plant"),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed energy model: {exc!r}") from exc


def save_model(model: EnergyModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str) -> EnergyModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"bad model JSON at line {exc.lineno} col {exc.colno}: {exc.msg}"
            ) from exc
    return model_from_dict(doc)
