"""HTTP service shell: REST + event-stream API over the telemetry core.

One scheduler thread drives the simulator (or a CSV replay), pushes every
reading through the per-machine streaming detectors, and refreshes the
maintenance and forecast caches on fixed tick intervals. Request handlers
are stateless: they read store snapshots and the latest caches, so any
number can run concurrently with ingestion.

Server-push uses the text/event-stream format. A subscriber that falls more
than the buffer size behind receives a terminal `overflow` event and is
disconnected, per the push contract.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping, Sequence

import numpy as np

from . import assistant as assistant_mod
from . import energy as energy_mod
from . import forest, scenario as scenario_mod
from .core import (
    METRIC_UNITS,
    SensorReading,
    TelemetryStore,
    metric_order,
    read_csv,
    timestamp_for_tick,
)
from .errors import (
    ExhaustedError,
    InsufficientDataError,
    SchemaMismatchError,
    SmartlineError,
    StartupError,
    UnknownMachineError,
    ValidationError,
)
from .isoforest import StreamingDetector
from .maintenance import (
    HORIZON_DEFAULT,
    INSIGHT_COLUMNS,
    WINDOW_DEFAULT,
    ReasonCatalog,
    RiskAssessment,
    assess_risk,
    extract_features,
    generate_insights,
    top_drift_metric,
    train_risk_model,
)
from .plantsim import SimConfig, Simulator, default_profiles, load_config
from .rng import Rng

log = logging.getLogger(__name__)

API_VERSION = 1
SSE_KEEPALIVE_S = 5.0
DEFAULT_ALERT_WINDOW_TICKS = 3600
DEFAULT_FORECAST_HORIZON = 24
DEFAULT_FLOW_WINDOW_TICKS = 600
MAX_FORECAST_HORIZON = 1000
SCENARIO_BASELINE_TICKS = 600


def slugify(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8800
    seed: int = 42
    ticks: int = 86_400
    tick_ms: int = 1000
    pace: str = "real"                  # "real" sleeps a tick between steps
    sim_config_path: str | None = None  # overrides the default seeded sim
    replay_csv: str | None = None       # feed from a CSV instead of the sim
    diurnal_amplitude: float = 0.1
    contamination: float = 0.01
    detect_every: int = 1
    assess_every: int = 60
    forecast_every: int = 60
    window: int = WINDOW_DEFAULT
    horizon: int = HORIZON_DEFAULT
    lags: int = energy_mod.LAGS_DEFAULT
    include_low: bool = False
    risk_model_path: str | None = None
    energy_model_path: str | None = None
    train_on_start: bool = False
    log_path: str | None = None
    static_dir: str | None = None
    reason_catalog_path: str | None = None

    def validate(self) -> None:
        for name in ("detect_every", "assess_every", "forecast_every"):
            if getattr(self, name) < 1:
                raise StartupError(f"{name} must be >= 1")
        if self.pace not in ("real", "max"):
            raise StartupError(f"pace must be 'real' or 'max', not {self.pace!r}")
        for label, path in (("sim config", self.sim_config_path),
                            ("replay CSV", self.replay_csv),
                            ("risk model", self.risk_model_path),
                            ("energy model", self.energy_model_path),
                            ("static dir", self.static_dir),
                            ("reason catalog", self.reason_catalog_path)):
            if path is not None and not os.path.exists(path):
                raise StartupError(f"{label} path does not exist: {path}")
        if not self.train_on_start and self.risk_model_path is None \
                and self.energy_model_path is None:
            raise StartupError(
                "no model paths configured; pass --train-on-start or point at "
                "saved models"
            )

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ServiceConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise StartupError(f"unknown service config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path: str) -> "ServiceConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise StartupError(f"cannot read service config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise StartupError(
                f"bad service config JSON at line {exc.lineno}: {exc.msg}"
            ) from exc
        return cls.from_dict(doc)


class HttpError(SmartlineError):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


@dataclass
class _Caches:
    insights: dict = field(default_factory=lambda: {
        "version": API_VERSION, "columns": list(INSIGHT_COLUMNS),
        "now_ms": None, "insights": []})
    assessments: list = field(default_factory=list)
    forecast: dict | None = None


class GatewayService:
    """Owns the store, the feed, the detectors, and the model caches."""

    def __init__(self, config: ServiceConfig):
        config.validate()
        self.config = config
        if config.replay_csv is not None:
            self.sim = None
            readings = read_csv(config.replay_csv, tick_ms=config.tick_ms)
            self._replay_readings = readings
            machines = sorted({r.machine for r in readings})
            metrics_by_machine = {}
            for r in readings:
                metrics_by_machine.setdefault(r.machine, metric_order(r.values))
            feed_tick_ms, epoch_base_ms = config.tick_ms, None
        else:
            sim_config = self._sim_config()
            self.sim = Simulator(sim_config)
            self._replay_readings = None
            machines = [p.machine for p in sim_config.profiles]
            metrics_by_machine = {p.machine: p.metrics
                                  for p in sim_config.profiles}
            feed_tick_ms = sim_config.tick_ms
            epoch_base_ms = sim_config.epoch_base_ms
        self.machines = machines
        self._slugs = {slugify(m): m for m in machines}
        store_kwargs = dict(machines=machines, tick_ms=feed_tick_ms,
                            log_path=config.log_path)
        if epoch_base_ms is not None:
            store_kwargs["epoch_base_ms"] = epoch_base_ms
        self.store = TelemetryStore(**store_kwargs)
        self.detectors = {
            m: StreamingDetector(
                feature_names=metrics_by_machine[m],
                contamination=config.contamination,
                seed=Rng.for_stream(config.seed, f"detector-{m}").seed)
            for m in machines
        }
        self.catalog = (ReasonCatalog.load(config.reason_catalog_path)
                        if config.reason_catalog_path
                        else ReasonCatalog.default())
        self.caches = _Caches()
        self._plant_points: list[energy_mod.EnergyPoint] = []
        self._risk_model = None
        self._energy_model: energy_mod.EnergyModel | None = None
        self._lock = threading.RLock()
        self._stop = threading.Event()
        self._scheduler: threading.Thread | None = None
        self._load_or_train_models()

    def _sim_config(self) -> SimConfig:
        if self.config.sim_config_path is not None:
            return load_config(self.config.sim_config_path)
        return SimConfig(
            seed=self.config.seed, ticks=self.config.ticks,
            profiles=default_profiles(),
            diurnal_amplitude=self.config.diurnal_amplitude,
            tick_ms=self.config.tick_ms)

    def _load_or_train_models(self) -> None:
        cfg = self.config
        if cfg.risk_model_path is not None:
            self._risk_model = forest.load_model(cfg.risk_model_path)
        if cfg.energy_model_path is not None:
            self._energy_model = energy_mod.load_model(cfg.energy_model_path)
        if not cfg.train_on_start:
            return
        if self._replay_readings is not None:
            priming = self._replay_readings
        else:
            sim_config = self._sim_config()
            from .plantsim import generate_labeled_dataset

            dataset = generate_labeled_dataset(sim_config, cfg.horizon)
            priming = dataset.readings
            if self._risk_model is None and sim_config.degradations:
                report = train_risk_model(dataset, window=cfg.window,
                                          seed=cfg.seed)
                self._risk_model = report.model
                log.info("risk model trained on start: precision %.3f "
                         "recall %.3f", report.precision, report.recall)
        if self._risk_model is None:
            log.warning("no risk model: maintenance insights stay empty")
        if self._energy_model is None:
            points = energy_mod.plant_series(priming)
            if len(points) > cfg.lags + 1:
                self._energy_model = energy_mod.train_energy_model(
                    points, lags=cfg.lags, seed=cfg.seed,
                    tick_ms=self.store.tick_ms)
            else:
                log.warning("not enough priming data for an energy model")

    # -- feed --------------------------------------------------------------

    def _tick_groups(self):
        if self._replay_readings is not None:
            group: list[SensorReading] = []
            for reading in self._replay_readings:
                if group and reading.tick != group[0].tick:
                    yield group[0].tick, group
                    group = []
                group.append(reading)
            if group:
                yield group[0].tick, group
            return
        while True:
            try:
                readings = self.sim.step()
            except ExhaustedError:
                return
            if readings:
                yield readings[0].tick, readings

    def _run_scheduler(self) -> None:
        cfg = self.config
        for tick, readings in self._tick_groups():
            if self._stop.is_set():
                break
            acc_power = acc_grid = 0.0
            loads, batteries = [], []
            for reading in readings:
                self.store.ingest_reading(reading)
                if (tick + 1) % cfg.detect_every == 0:
                    alert = self.detectors[reading.machine].observe(reading)
                    if alert is not None:
                        self.store.record_alert(alert)
                acc_power += float(reading.values.get("PowerLoad", 0.0))
                acc_grid += float(reading.values.get("GridUsage", 0.0))
                if "MachineLoad" in reading.values:
                    loads.append(float(reading.values["MachineLoad"]))
                if "BatteryCapacity" in reading.values:
                    batteries.append(float(reading.values["BatteryCapacity"]))
            point = energy_mod.EnergyPoint(
                tick=tick,
                timestamp_ms=readings[0].timestamp_ms,
                power_kw=acc_power,
                machine_load=float(np.mean(loads)) if loads else 0.0,
                grid_kw=acc_grid,
                battery_capacity=float(np.mean(batteries)) if batteries else 0.0)
            with self._lock:
                self._plant_points.append(point)
                if len(self._plant_points) > 10_000:
                    del self._plant_points[:1000]
            if (tick + 1) % cfg.assess_every == 0:
                self._refresh_insights()
            if (tick + 1) % cfg.forecast_every == 0:
                self._refresh_forecast()
            if cfg.pace == "real" and not self._stop.is_set():
                time.sleep(self.store.tick_ms / 1000.0)
        log.info("feed finished at tick %d", self.store.latest_tick())

    def _refresh_insights(self) -> None:
        if self._risk_model is None:
            return
        cfg = self.config
        last = self.store.latest_tick()
        windows, tops = [], {}
        for machine in self.machines:
            rows = self.store.query_window(
                machine, max(0, last - cfg.window + 1), last)
            if len(rows) < cfg.window:
                continue
            try:
                fw = extract_features(rows, cfg.window)
            except (InsufficientDataError, ValidationError):
                continue
            windows.append(fw)
            tops[machine] = top_drift_metric(fw)
        if not windows:
            return
        try:
            assessments = assess_risk(self._risk_model, windows)
        except SchemaMismatchError as exc:
            log.warning("risk assessment skipped: %s", exc)
            return
        now_ms = timestamp_for_tick(last, self.store.tick_ms,
                                    self.store.epoch_base_ms)
        insights = generate_insights(assessments, tops, now_ms,
                                     catalog=self.catalog,
                                     include_low=cfg.include_low)
        payload = {
            "version": API_VERSION,
            "columns": list(INSIGHT_COLUMNS),
            "now_ms": now_ms,
            "insights": [i.to_payload() for i in insights],
        }
        with self._lock:
            self.caches.insights = payload
            self.caches.assessments = assessments
        self.store.append_event("insight", payload)

    def _refresh_forecast(self) -> None:
        try:
            payload = self.compute_forecast(DEFAULT_FORECAST_HORIZON)
        except (HttpError, SmartlineError) as exc:
            log.debug("forecast refresh skipped: %s", exc)
            return
        with self._lock:
            self.caches.forecast = payload
        self.store.append_event("forecast", payload)

    # -- lifecycle -----------------------------------------------------------

    def start_feed(self) -> None:
        self._scheduler = threading.Thread(
            target=self._run_scheduler, name="smartline-scheduler", daemon=True)
        self._scheduler.start()

    def stop(self) -> None:
        self._stop.set()
        if self._scheduler is not None:
            self._scheduler.join(timeout=10.0)
        self.store.close()

    # -- request-side operations --------------------------------------------

    def resolve_machine(self, raw: str) -> str:
        name = urllib.parse.unquote(raw)
        if name in self.store.machines:
            return name
        resolved = self._slugs.get(slugify(name))
        if resolved is None:
            raise UnknownMachineError(name)
        return resolved

    def machines_payload(self) -> dict:
        rows = []
        for machine in self.machines:
            latest = self.store.latest(machine)
            rows.append({
                "id": machine,
                "slug": slugify(machine),
                "metrics": list(latest.values) if latest else [],
                "latest_tick": latest.tick if latest else None,
            })
        return {"version": API_VERSION, "machines": rows}

    def readings_payload(self, machine: str, from_tick: int,
                         to_tick: int) -> dict:
        rows = self.store.query_window(machine, from_tick, to_tick)
        return {
            "version": API_VERSION,
            "machine": machine,
            "from_tick": from_tick,
            "to_tick": to_tick,
            "readings": [r.to_payload() for r in rows],
        }

    def alerts_payload(self, window_ticks: int) -> dict:
        alerts = self.store.alerts_in_window(window_ticks)
        return {
            "version": API_VERSION,
            "window_ticks": window_ticks,
            "alerts": [a.to_payload() for a in alerts],
        }

    def compute_forecast(self, horizon: int) -> dict:
        if self._energy_model is None:
            raise HttpError(400, "no energy model is loaded")
        with self._lock:
            points = list(self._plant_points)
        if len(points) < self._energy_model.lags:
            raise HttpError(400, "not enough history for a forecast yet")
        fc = energy_mod.forecast(self._energy_model, points, horizon)
        payload = fc.to_payload()
        payload["version"] = API_VERSION
        return payload

    def flows_payload(self, window_ticks: int) -> dict:
        last = self.store.latest_tick()
        if last < 0:
            raise HttpError(400, "no readings ingested yet")
        readings: list[SensorReading] = []
        for machine in self.machines:
            readings.extend(self.store.query_window(
                machine, max(0, last - window_ticks + 1), last))
        edges = energy_mod.flow_aggregate(readings, self.store.tick_ms)
        energy_mod.verify_conservation(edges)
        return {
            "version": API_VERSION,
            "window_ticks": window_ticks,
            "edges": [e.to_payload() for e in edges],
            "total_kwh": energy_mod.plant_total_kwh(edges),
        }

    def scenario_payload(self, body: Mapping) -> dict:
        for key in ("line_speed", "machine_speed", "cooling"):
            if key not in body:
                raise HttpError(422, f"missing field {key!r}")
            if not isinstance(body[key], (int, float)) \
                    or isinstance(body[key], bool):
                raise HttpError(422, f"field {key!r} must be a number")
        last = self.store.latest_tick()
        if last < 0:
            raise HttpError(400, "no readings to derive a baseline from")
        readings: list[SensorReading] = []
        for machine in self.machines:
            readings.extend(self.store.query_window(
                machine, max(0, last - SCENARIO_BASELINE_TICKS + 1), last))
        coeffs = scenario_mod.ScenarioCoefficients.default()
        baseline = scenario_mod.baseline_from_readings(readings, coeffs)
        spec_in = scenario_mod.ScenarioInput(
            name=str(body.get("name", "what-if")),
            line_speed=float(body["line_speed"]),
            machine_speed=float(body["machine_speed"]),
            cooling=float(body["cooling"]))
        outcome = scenario_mod.evaluate(spec_in, baseline, coeffs)
        payload = {
            "version": API_VERSION,
            "baseline": {
                "throughput_units_h": baseline.throughput_units_h,
                "energy_kw": baseline.energy_kw,
                "defect_rate": baseline.defect_rate,
            },
            "outcome": outcome.to_payload(),
            "deltas": {
                "throughput_units_h": outcome.throughput_units_h
                - baseline.throughput_units_h,
                "energy_kw": outcome.energy_kw - baseline.energy_kw,
                "defect_rate": outcome.defect_rate - baseline.defect_rate,
            },
        }
        self.store.append_event("scenario", payload)
        return payload

    def assistant_payload(self, body: Mapping) -> dict:
        q = body.get("q")
        if not isinstance(q, str) or not q.strip():
            raise HttpError(422, "body must carry a non-empty string field 'q'")
        backend = GatewayBackend(self)
        remote = assistant_mod.RemoteConfig.from_env()
        answer = assistant_mod.answer(q, backend, remote=remote)
        payload = answer.to_payload()
        payload["version"] = API_VERSION
        self.store.append_event("query", {"q": q, "answer": payload})
        return payload


class GatewayBackend:
    """assistant.Backend implementation over live service state."""

    def __init__(self, service: GatewayService):
        self.service = service

    def failure_ranking(self) -> list[dict]:
        with self.service._lock:
            assessments: Sequence[RiskAssessment] = self.service.caches.assessments
            return [{"machine": a.machine, "risk": a.risk}
                    for a in assessments]

    def latest_metric(self, machine: str, metric: str) -> dict:
        reading = self.service.store.latest(machine)
        value = None if reading is None else reading.values.get(metric)
        return {
            "machine": machine,
            "metric": metric,
            "value": value,
            "unit": METRIC_UNITS.get(metric, ""),
            "tick": None if reading is None else reading.tick,
            "timestamp_ms": None if reading is None else reading.timestamp_ms,
        }

    def anomalies_in_window(self, window_s: int,
                            machine: str | None = None) -> list[dict]:
        ticks = max(1, (window_s * 1000) // self.service.store.tick_ms)
        alerts = self.service.store.alerts_in_window(ticks)
        if machine is not None:
            alerts = [a for a in alerts if a.machine == machine]
        return [a.to_payload() for a in alerts]

    def forecast_power(self, horizon_ticks: int) -> dict:
        try:
            return self.service.compute_forecast(horizon_ticks)
        except HttpError:
            return {}

    def maintenance_plan(self, machine: str | None = None) -> list[dict]:
        with self.service._lock:
            rows = list(self.service.caches.insights["insights"])
        if machine is not None:
            rows = [r for r in rows if r["machine"] == machine]
        return [{
            "Task": r["task"],
            "Priority": r["priority"],
            "Reason": r["reason"],
            "MachineID": r["machine"],
            "Scheduled Date": r["scheduled_date"],
        } for r in rows]


# -- HTTP layer ---------------------------------------------------------------

_READINGS_RE = re.compile(r"^/machines/([^/]+)/readings$")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".map": "application/json",
}


def _int_param(params: Mapping, name: str, default: int | None = None) -> int:
    raw = params.get(name)
    if raw is None or raw == [""]:
        if default is None:
            raise HttpError(400, f"missing query parameter {name!r}")
        return default
    try:
        return int(raw[0])
    except (TypeError, ValueError):
        raise HttpError(400, f"query parameter {name!r} must be an integer")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "smartline"

    @property
    def service(self) -> GatewayService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        log.debug("%s " + fmt, self.address_string(), *args)

    # -- plumbing ----------------------------------------------------------

    def _send_json(self, payload: Mapping, status: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json({"code": status, "message": message}, status=status)

    def _read_body(self) -> Mapping:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise HttpError(422, "request body must be JSON")
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise HttpError(422, "request body is not valid JSON")
        if not isinstance(doc, dict):
            raise HttpError(422, "request body must be a JSON object")
        return doc

    def _dispatch(self, method: str) -> None:
        parsed = urllib.parse.urlsplit(self.path)
        path = parsed.path.rstrip("/") or "/"
        params = urllib.parse.parse_qs(parsed.query)
        try:
            self._route(method, path, params)
        except HttpError as exc:
            self._send_error_json(exc.status, str(exc))
        except UnknownMachineError as exc:
            self._send_error_json(404, str(exc))
        except SchemaMismatchError as exc:
            self._send_error_json(422, str(exc))
        except SmartlineError as exc:
            self._send_error_json(400, str(exc))
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception:
            log.exception("unhandled error on %s %s", method, self.path)
            self._send_error_json(500, "internal error")

    def do_GET(self) -> None:  # noqa: N802 (stdlib handler naming)
        self._dispatch("GET")

    def do_POST(self) -> None:  # noqa: N802
        self._dispatch("POST")

    # -- routing -----------------------------------------------------------

    def _route(self, method: str, path: str, params: Mapping) -> None:
        service = self.service
        if method == "GET":
            if path == "/machines":
                self._send_json(service.machines_payload())
                return
            m = _READINGS_RE.match(path)
            if m:
                machine = service.resolve_machine(m.group(1))
                latest = service.store.latest_tick()
                from_tick = _int_param(params, "from", 0)
                to_tick = _int_param(params, "to", max(latest, 0))
                self._send_json(
                    service.readings_payload(machine, from_tick, to_tick))
                return
            if path == "/alerts":
                window = _int_param(params, "window",
                                    DEFAULT_ALERT_WINDOW_TICKS)
                if window < 0:
                    raise HttpError(400, "window must be non-negative")
                self._send_json(service.alerts_payload(window))
                return
            if path == "/maintenance/insights":
                with service._lock:
                    payload = dict(service.caches.insights)
                self._send_json(payload)
                return
            if path == "/energy/forecast":
                horizon = _int_param(params, "horizon",
                                     DEFAULT_FORECAST_HORIZON)
                if not 1 <= horizon <= MAX_FORECAST_HORIZON:
                    raise HttpError(
                        400, f"horizon must be in [1, {MAX_FORECAST_HORIZON}]")
                self._send_json(service.compute_forecast(horizon))
                return
            if path == "/energy/flows":
                window = _int_param(params, "window",
                                    DEFAULT_FLOW_WINDOW_TICKS)
                if window < 1:
                    raise HttpError(400, "window must be >= 1")
                self._send_json(service.flows_payload(window))
                return
            if path == "/stream/readings":
                self._stream("readings")
                return
            if path == "/stream/alerts":
                self._stream("alerts")
                return
            if self._serve_static(path):
                return
            raise HttpError(404, f"no route for GET {path}")
        if method == "POST":
            if path == "/scenario/simulate":
                self._send_json(service.scenario_payload(self._read_body()))
                return
            if path == "/assistant/query":
                self._send_json(service.assistant_payload(self._read_body()))
                return
            raise HttpError(404, f"no route for POST {path}")
        raise HttpError(404, f"unsupported method {method}")

    # -- static files --------------------------------------------------------

    def _serve_static(self, path: str) -> bool:
        root = self.service.config.static_dir
        if root is None:
            return False
        rel = "index.html" if path == "/" else path.lstrip("/")
        full = os.path.realpath(os.path.join(root, rel))
        if not full.startswith(os.path.realpath(root) + os.sep) \
                and full != os.path.realpath(root):
            return False
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            return False
        ext = os.path.splitext(full)[1].lower()
        ctype = _CONTENT_TYPES.get(ext, "application/octet-stream")
        with open(full, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)
        return True

    # -- event stream --------------------------------------------------------

    def _stream(self, channel: str) -> None:
        sub = self.service.store.subscribe(channel)
        kind = "reading" if channel == "readings" else "alert"
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-store")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(b": connected\n\n")
            self.wfile.flush()
            while True:
                item = sub.poll(timeout=SSE_KEEPALIVE_S)
                if item is None:
                    if sub.overflowed:
                        frame = (
                            "event: overflow\n"
                            "data: {\"code\": 429, \"message\": "
                            "\"subscriber too slow, resync required\"}\n\n")
                        self.wfile.write(frame.encode("utf-8"))
                        self.wfile.flush()
                        return
                    if sub.closed:
                        return
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                frame = f"event: {kind}\ndata: {json.dumps(item)}\n\n"
                self.wfile.write(frame.encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.service.store.unsubscribe(sub)


class ServiceHandle:
    """A running server plus its feed; stop() tears both down."""

    def __init__(self, service: GatewayService, server: ThreadingHTTPServer):
        self.service = service
        self.server = server
        self._thread = threading.Thread(
            target=server.serve_forever, name="smartline-http", daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self.server.server_address[:2]

    def start(self) -> "ServiceHandle":
        self.service.start_feed()
        self._thread.start()
        return self

    def stop(self) -> None:
        self.service.stop()
        self.server.shutdown()
        self.server.server_close()
        self._thread.join(timeout=10.0)


def serve(config: ServiceConfig) -> ServiceHandle:
    """Build the service and bind the server; raises StartupError if the
    port is taken or required artifacts are missing."""
    service = GatewayService(config)
    try:
        server = ThreadingHTTPServer((config.host, config.port), _Handler)
    except OSError as exc:
        service.stop()
        raise StartupError(
            f"cannot bind {config.host}:{config.port}: {exc}") from exc
    server.daemon_threads = True
    server.service = service  # type: ignore[attr-defined]
    return ServiceHandle(service, server).start()
