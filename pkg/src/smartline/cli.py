"""Command-line entry point.

Seven subcommands: simulate, train, detect, forecast, insights, ask, serve.
Everything except serve works offline on CSV files, so the full analysis
path can run without the HTTP service.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time

import numpy as np

from . import energy, forest, isoforest
from .assistant import RemoteConfig, answer as assistant_answer
from .core import (
    METRIC_UNITS,
    read_csv,
    timestamp_for_tick,
    write_csv,
)
from .errors import SmartlineError, ValidationError
from .gateway import ServiceConfig, serve
from .maintenance import (
    HORIZON_DEFAULT,
    INSIGHT_COLUMNS,
    WINDOW_DEFAULT,
    ReasonCatalog,
    assess_risk,
    extract_features,
    generate_insights,
    top_drift_metric,
    train_risk_model,
)
from .plantsim import (
    SimConfig,
    default_profiles,
    generate_labeled_dataset,
    load_config,
    run_stream,
)

log = logging.getLogger(__name__)


def _write_json(path: str, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _load_readings(path: str, tick_ms: int):
    readings = read_csv(path, tick_ms=tick_ms)
    if not readings:
        raise ValidationError(f"no readings in {path}")
    return readings


def _sim_config_from_args(args) -> SimConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = SimConfig(seed=42, ticks=600, profiles=default_profiles())
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.ticks is not None:
        overrides["ticks"] = args.ticks
    if getattr(args, "diurnal", None) is not None:
        overrides["diurnal_amplitude"] = args.diurnal
    if getattr(args, "tick_ms", None) is not None:
        overrides["tick_ms"] = args.tick_ms
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = _sim_config_from_args(args)
    readings, crossings = run_stream(config)
    write_csv(readings, args.out)
    print(f"wrote {len(readings)} readings for "
          f"{len(config.profiles)} machines to {args.out}")
    if crossings:
        print(f"{len(crossings)} failure-threshold crossings:")
        for c in crossings:
            print(f"  {c.machine} {c.metric} at tick {c.tick}")
    if args.crossings_out:
        _write_json(args.crossings_out, [
            {"machine": c.machine, "metric": c.metric, "tick": c.tick,
             "threshold": c.threshold}
            for c in crossings])
    return 0


def cmd_train(args) -> int:
    if args.kind in ("anomaly", "energy") and not args.readings:
        raise ValidationError(f"--readings is required for --kind {args.kind}")
    if args.kind == "anomaly":
        readings = _load_readings(args.readings, args.tick_ms)
        machines = sorted({r.machine for r in readings})
        machine = args.machine or (machines[0] if len(machines) == 1 else None)
        if machine is None:
            raise ValidationError(
                f"CSV holds {len(machines)} machines; pick one with --machine")
        rows = [r for r in readings if r.machine == machine]
        if not rows:
            raise ValidationError(f"no readings for machine {machine!r}")
        feature_names = list(rows[0].values)
        X = np.asarray([[r.values[m] for m in feature_names] for r in rows])
        model = isoforest.fit_isoforest(
            X, contamination=args.contamination, seed=args.seed,
            feature_names=feature_names)
        isoforest.save_model(model, args.out)
        print(f"anomaly model for {machine}: {len(rows)} rows, threshold "
              f"{model.threshold:.4f} -> {args.out}")
        return 0

    if args.kind == "risk":
        config = _sim_config_from_args(args)
        if not config.degradations:
            raise ValidationError(
                "risk training needs a sim config with degradation episodes "
                "(labels come from threshold crossings)")
        dataset = generate_labeled_dataset(config, horizon=args.horizon)
        report = train_risk_model(dataset, window=args.window, seed=args.seed)
        forest.save_model(report.model, args.out)
        print(f"risk model: precision {report.precision:.3f} recall "
              f"{report.recall:.3f} on {report.n_test} held-out windows "
              f"-> {args.out}")
        return 0

    if args.kind == "energy":
        readings = _load_readings(args.readings, args.tick_ms)
        points = energy.plant_series(readings)
        model = energy.train_energy_model(
            points, lags=args.lags, seed=args.seed, tick_ms=args.tick_ms)
        energy.save_model(model, args.out)
        print(f"energy model: {len(points)} points, lags {args.lags}, peak "
              f"threshold {model.peak_threshold_kw:.2f} kW -> {args.out}")
        return 0

    raise ValidationError(f"unknown train kind {args.kind!r}")


def cmd_detect(args) -> int:
    model = isoforest.load_model(args.model)
    readings = _load_readings(args.readings, args.tick_ms)
    if args.machine:
        readings = [r for r in readings if r.machine == args.machine]
        if not readings:
            raise ValidationError(f"no readings for machine {args.machine!r}")
    machines = sorted({r.machine for r in readings})
    if len(machines) > 1:
        raise ValidationError(
            f"CSV holds {len(machines)} machines; pick one with --machine")
    alerts = isoforest.detect_stream(model, readings)
    print(f"{len(alerts)} alerts over {len(readings)} readings "
          f"({100.0 * len(alerts) / len(readings):.2f}%)")
    for a in alerts[:10]:
        print(f"  tick {a.tick}: {a.severity} score {a.score:.4f} "
              f"top metric {a.top_metric}")
    if len(alerts) > 10:
        print(f"  ... and {len(alerts) - 10} more")
    if args.out:
        _write_json(args.out, [a.to_payload() for a in alerts])
    return 0


def cmd_forecast(args) -> int:
    model = energy.load_model(args.model)
    readings = _load_readings(args.readings, args.tick_ms)
    points = energy.plant_series(readings)
    fc = energy.forecast(model, points, args.horizon)
    peaks = sum(1 for f in fc.peak_flags if f)
    print(f"{args.horizon}-step forecast from tick {fc.start_tick}: "
          f"{min(fc.values_kw):.2f} to {max(fc.values_kw):.2f} kW, "
          f"{peaks} peak step(s) over {fc.peak_threshold_kw:.2f} kW")
    for tick, value, flag in zip(fc.ticks, fc.values_kw, fc.peak_flags):
        marker = "  PEAK" if flag else ""
        print(f"  tick {tick}: {value:.2f} kW{marker}")
    if args.out:
        _write_json(args.out, fc.to_payload())
    return 0


def _windows_from_readings(readings, window):
    streams = {}
    for r in readings:
        streams.setdefault(r.machine, []).append(r)
    windows, tops = [], {}
    for machine, rows in streams.items():
        if len(rows) < window:
            log.warning("skipping %s: only %d readings (< window %d)",
                        machine, len(rows), window)
            continue
        fw = extract_features(rows, window)
        windows.append(fw)
        tops[machine] = top_drift_metric(fw)
    if not windows:
        raise ValidationError(
            f"no machine has {window} readings; lower --window")
    return windows, tops


def cmd_insights(args) -> int:
    model = forest.load_model(args.risk_model)
    readings = _load_readings(args.readings, args.tick_ms)
    windows, tops = _windows_from_readings(readings, args.window)
    assessments = assess_risk(model, windows)
    now_ms = max(r.timestamp_ms for r in readings)
    catalog = (ReasonCatalog.load(args.catalog) if args.catalog
               else ReasonCatalog.default())
    insights = generate_insights(assessments, tops, now_ms, catalog=catalog,
                                 include_low=args.include_low)
    if not insights:
        print("no machines above the risk gate")
        return 0
    rows = [i.to_row() for i in insights]
    widths = [max(len(str(cell)) for cell in [col] + [r[j] for r in rows])
              for j, col in enumerate(INSIGHT_COLUMNS)]
    print("  ".join(c.ljust(w) for c, w in zip(INSIGHT_COLUMNS, widths)))
    for r in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))
    if args.out:
        _write_json(args.out, {
            "columns": list(INSIGHT_COLUMNS),
            "now_ms": now_ms,
            "insights": [i.to_payload() for i in insights],
        })
    return 0


class OfflineBackend:
    """Assistant backend over CSV readings plus optional saved artifacts."""

    def __init__(self, readings, tick_ms, risk_model=None, alerts=None,
                 energy_model=None, window=WINDOW_DEFAULT):
        self.readings = readings
        self.tick_ms = tick_ms
        self.risk_model = risk_model
        self.alerts = alerts or []
        self.energy_model = energy_model
        self.window = window
        self.latest_by_machine = {}
        for r in readings:
            self.latest_by_machine[r.machine] = r

    def failure_ranking(self) -> list[dict]:
        if self.risk_model is None:
            return []
        try:
            windows, _ = _windows_from_readings(self.readings, self.window)
        except ValidationError:
            return []
        return [{"machine": a.machine, "risk": a.risk}
                for a in assess_risk(self.risk_model, windows)]

    def latest_metric(self, machine: str, metric: str) -> dict:
        r = self.latest_by_machine.get(machine)
        return {
            "machine": machine,
            "metric": metric,
            "value": None if r is None else r.values.get(metric),
            "unit": METRIC_UNITS.get(metric, ""),
            "tick": None if r is None else r.tick,
            "timestamp_ms": None if r is None else r.timestamp_ms,
        }

    def anomalies_in_window(self, window_s, machine=None) -> list[dict]:
        if not self.readings:
            return []
        last = max(r.tick for r in self.readings)
        ticks = max(1, (window_s * 1000) // self.tick_ms)
        rows = [a for a in self.alerts if a["tick"] > last - ticks]
        if machine is not None:
            rows = [a for a in rows if a["machine"] == machine]
        return rows

    def forecast_power(self, horizon_ticks: int) -> dict:
        if self.energy_model is None:
            return {}
        points = energy.plant_series(self.readings)
        if len(points) < self.energy_model.lags:
            return {}
        return energy.forecast(
            self.energy_model, points, horizon_ticks).to_payload()

    def maintenance_plan(self, machine=None) -> list[dict]:
        if self.risk_model is None:
            return []
        try:
            windows, tops = _windows_from_readings(self.readings, self.window)
        except ValidationError:
            return []
        assessments = assess_risk(self.risk_model, windows)
        now_ms = max(r.timestamp_ms for r in self.readings)
        insights = generate_insights(assessments, tops, now_ms)
        rows = [dict(zip(INSIGHT_COLUMNS, i.to_row())) for i in insights]
        if machine is not None:
            rows = [r for r in rows if r["MachineID"] == machine]
        return rows


def cmd_ask(args) -> int:
    readings = _load_readings(args.readings, args.tick_ms)
    risk_model = forest.load_model(args.risk_model) if args.risk_model else None
    energy_model = (energy.load_model(args.energy_model)
                    if args.energy_model else None)
    alerts = None
    if args.alerts:
        with open(args.alerts, "r", encoding="utf-8") as fh:
            alerts = json.load(fh)
    backend = OfflineBackend(readings, args.tick_ms, risk_model=risk_model,
                             alerts=alerts, energy_model=energy_model,
                             window=args.window)
    remote = RemoteConfig.from_env() if args.allow_remote else None
    started = time.perf_counter()
    result = assistant_answer(args.question, backend, remote=remote)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    print(result.text)
    if args.show_data:
        print(json.dumps(result.data, indent=2, default=str))
    log.info("answered via %s in %.1f ms", result.source, elapsed_ms)
    return 0


def cmd_serve(args) -> int:
    if args.config:
        config = ServiceConfig.from_file(args.config)
    else:
        config = ServiceConfig(train_on_start=True)
    overrides = {}
    for name in ("host", "port", "seed", "ticks", "pace", "log_path",
                 "static_dir", "replay_csv"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.train_on_start:
        overrides["train_on_start"] = True
    if args.tick_ms is not None:
        overrides["tick_ms"] = args.tick_ms
    if overrides:
        config = dataclasses.replace(config, **overrides)
    handle = serve(config)
    host, port = handle.address
    print(f"serving on http://{host}:{port} (pace={config.pace}); Ctrl-C stops")
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        handle.stop()
    return 0


# -- parser --------------------------------------------------------------------

def _add_tick_ms(p, default=1000):
    p.add_argument("--tick-ms", type=int, default=default, dest="tick_ms",
                   help="milliseconds per tick (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smartline",
        description="Battery production line telemetry: simulation, anomaly "
                    "detection, failure prediction, energy forecasting, and "
                    "an operator Q&A service.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log at INFO level (twice for DEBUG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a seeded telemetry CSV")
    p.add_argument("--config", help="sim config JSON (default: built-in line)")
    p.add_argument("--seed", type=int)
    p.add_argument("--ticks", type=int)
    p.add_argument("--diurnal", type=float, help="diurnal amplitude [0, 1)")
    _add_tick_ms(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--crossings-out", dest="crossings_out",
                   help="also write threshold crossings as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit a model and save it as JSON")
    p.add_argument("--kind", required=True,
                   choices=["anomaly", "risk", "energy"])
    p.add_argument("--readings", help="telemetry CSV (anomaly and energy)")
    p.add_argument("--config", help="sim config JSON (risk)")
    p.add_argument("--machine", help="machine to train on (anomaly)")
    p.add_argument("--contamination", type=float, default=0.01)
    p.add_argument("--window", type=int, default=WINDOW_DEFAULT)
    p.add_argument("--horizon", type=int, default=HORIZON_DEFAULT)
    p.add_argument("--lags", type=int, default=energy.LAGS_DEFAULT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ticks", type=int, help="override sim ticks (risk)")
    _add_tick_ms(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train, diurnal=None)

    p = sub.add_parser("detect", help="score a CSV with a saved anomaly model")
    p.add_argument("--model", required=True)
    p.add_argument("--readings", required=True)
    p.add_argument("--machine")
    _add_tick_ms(p)
    p.add_argument("--out", help="write alerts JSON here")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("forecast", help="forecast plant power from a CSV")
    p.add_argument("--model", required=True, help="saved energy model")
    p.add_argument("--readings", required=True)
    p.add_argument("--horizon", type=int, default=24)
    _add_tick_ms(p)
    p.add_argument("--out", help="write the forecast JSON here")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("insights",
                       help="maintenance insight table from a CSV")
    p.add_argument("--risk-model", required=True, dest="risk_model")
    p.add_argument("--readings", required=True)
    p.add_argument("--window", type=int, default=WINDOW_DEFAULT)
    p.add_argument("--include-low", action="store_true", dest="include_low")
    p.add_argument("--catalog", help="custom reason catalog JSON")
    _add_tick_ms(p)
    p.add_argument("--out", help="write the table JSON here")
    p.set_defaults(func=cmd_insights)

    p = sub.add_parser("ask", help="answer an operator question offline")
    p.add_argument("--question", required=True)
    p.add_argument("--readings", required=True)
    p.add_argument("--risk-model", dest="risk_model")
    p.add_argument("--energy-model", dest="energy_model")
    p.add_argument("--alerts", help="alerts JSON from `smartline detect`")
    p.add_argument("--window", type=int, default=WINDOW_DEFAULT)
    p.add_argument("--allow-remote", action="store_true", dest="allow_remote",
                   help="use the remote completion endpoint if configured")
    p.add_argument("--show-data", action="store_true", dest="show_data",
                   help="print the grounded data payload")
    _add_tick_ms(p)
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="service config JSON")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ticks", type=int)
    p.add_argument("--tick-ms", type=int, dest="tick_ms")
    p.add_argument("--pace", choices=["real", "max"])
    p.add_argument("--replay-csv", dest="replay_csv",
                   help="feed from a CSV instead of the simulator")
    p.add_argument("--train-on-start", action="store_true",
                   dest="train_on_start")
    p.add_argument("--log-path", dest="log_path")
    p.add_argument("--static-dir", dest="static_dir",
                   help="serve dashboard assets from this directory")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SmartlineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
