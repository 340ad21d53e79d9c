"""End-to-end batch pipeline: simulate, detect, train, and write artifacts.

Everything downstream of the seed is deterministic: timestamps derive from
tick numbers, model training uses counter-based generators, and artifacts
are serialized with fixed key order. Running the pipeline twice with the
same seed must produce byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import energy, forest, isoforest
from .core import TelemetryStore, timestamp_for_tick
from .errors import ValidationError
from .maintenance import (
    WINDOW_DEFAULT,
    HORIZON_DEFAULT,
    INSIGHT_COLUMNS,
    ReasonCatalog,
    assess_risk,
    extract_features,
    generate_insights,
    top_drift_metric,
    train_risk_model,
)
from .forest import Hyperparams
from .plantsim import (
    DegradationSpec,
    SimConfig,
    default_profiles,
    generate_labeled_dataset,
)

PIPELINE_TICKS = 1500
PIPELINE_DEGRADATIONS = (
    DegradationSpec(machine="Formation Equipment", metric="VibrationLevel",
                    start_tick=200, drift_per_tick=0.01),
    DegradationSpec(machine="Sealing Machine", metric="Temperature",
                    start_tick=600, drift_per_tick=0.15),
)
MODEL_HYPERPARAMS = Hyperparams(n_estimators=40, max_depth=12)
ISOFOREST_SET_FORMAT = "smartline-isoforest-set"

ARTIFACT_NAMES = ("events.log", "isoforest_models.json", "risk_model.json",
                  "energy_model.json", "insights.json")


@dataclass
class PipelineResult:
    out_dir: str
    artifacts: dict[str, str]
    n_readings: int
    n_alerts: int
    n_insights: int
    risk_precision: float
    risk_recall: float


def default_pipeline_config(seed: int = 42) -> SimConfig:
    return SimConfig(seed=seed, ticks=PIPELINE_TICKS,
                     profiles=default_profiles(),
                     degradations=PIPELINE_DEGRADATIONS)


def run_pipeline(out_dir: str, seed: int = 42,
                 config: SimConfig | None = None,
                 window: int = WINDOW_DEFAULT,
                 horizon: int = HORIZON_DEFAULT) -> PipelineResult:
    """Simulate, detect anomalies, train all models, and emit insights.

    Artifacts written to out_dir: events.log (readings + alerts),
    isoforest_models.json (one detector per machine), risk_model.json,
    energy_model.json, insights.json.
    """
    os.makedirs(out_dir, exist_ok=True)
    config = config or default_pipeline_config(seed)
    if not config.degradations:
        raise ValidationError(
            "pipeline needs at least one degradation episode to train the "
            "risk model"
        )
    paths = {name: os.path.join(out_dir, name) for name in ARTIFACT_NAMES}

    dataset = generate_labeled_dataset(config, horizon=horizon)
    readings = dataset.readings

    # Per-machine self-calibrated detectors over each full stream.
    streams: dict[str, list] = {}
    for r in readings:
        streams.setdefault(r.machine, []).append(r)
    machines = [p.machine for p in config.profiles]
    detectors = {}
    alerts_by_machine = {}
    for machine in machines:
        profile = config.profile_for(machine)
        rows = streams.get(machine, [])
        X = np.asarray([[r.values[m] for m in profile.metrics] for r in rows])
        model = isoforest.fit_isoforest(
            X, n_trees=100, subsample=256, contamination=0.01, seed=seed,
            feature_names=profile.metrics)
        detectors[machine] = model
        alerts_by_machine[machine] = isoforest.detect_stream(model, rows)

    # Event log: readings in tick order, alerts interleaved after the tick
    # they belong to so replay order matches live order.
    alert_queue = sorted(
        (a for alerts in alerts_by_machine.values() for a in alerts),
        key=lambda a: (a.tick, machines.index(a.machine)))
    store = TelemetryStore(machines=machines, tick_ms=config.tick_ms,
                           epoch_base_ms=config.epoch_base_ms,
                           log_path=paths["events.log"])
    qi = 0
    last_tick = readings[-1].tick if readings else 0
    per_tick: dict[int, list] = {}
    for r in readings:
        per_tick.setdefault(r.tick, []).append(r)
    for tick in sorted(per_tick):
        for r in per_tick[tick]:
            store.ingest_reading(r)
        while qi < len(alert_queue) and alert_queue[qi].tick <= tick:
            store.record_alert(alert_queue[qi])
            qi += 1
    n_alerts = qi
    store.close()

    report = train_risk_model(dataset, window=window, seed=seed,
                              hyperparams=MODEL_HYPERPARAMS)

    points = energy.plant_series(readings)
    energy_model = energy.train_energy_model(
        points, lags=energy.LAGS_DEFAULT, seed=seed,
        hyperparams=MODEL_HYPERPARAMS, tick_ms=config.tick_ms)

    now_ms = timestamp_for_tick(last_tick, config.tick_ms, config.epoch_base_ms)
    windows, tops = [], {}
    for machine in machines:
        rows = streams.get(machine, [])
        if len(rows) < window:
            continue
        fw = extract_features(rows[-window:], window)
        windows.append(fw)
        tops[machine] = top_drift_metric(fw)
    assessments = assess_risk(report.model, windows)
    insights = generate_insights(assessments, tops, now_ms,
                                 catalog=ReasonCatalog.default(),
                                 include_low=True)

    iso_doc = {
        "format": ISOFOREST_SET_FORMAT,
        "version": 1,
        "models": {m: isoforest.model_to_dict(detectors[m]) for m in machines},
    }
    _write_json(paths["isoforest_models.json"], iso_doc)
    forest.save_model(report.model, paths["risk_model.json"])
    energy.save_model(energy_model, paths["energy_model.json"])
    _write_json(paths["insights.json"], {
        "columns": list(INSIGHT_COLUMNS),
        "now_ms": now_ms,
        "insights": [i.to_payload() for i in insights],
    })

    return PipelineResult(
        out_dir=out_dir, artifacts=paths, n_readings=len(readings),
        n_alerts=n_alerts, n_insights=len(insights),
        risk_precision=report.precision, risk_recall=report.recall)


def load_isoforest_set(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != ISOFOREST_SET_FORMAT:
        raise ValidationError("not an isolation-forest set file")
    return {m: isoforest.model_from_dict(d) for m, d in doc["models"].items()}


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")
