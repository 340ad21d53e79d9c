"""Canonical domain model: machine registry, readings, telemetry store, event log.

Ticks are the authoritative clock everywhere. Wall-clock timestamps are always
derived as ``epoch_base_ms + tick * tick_ms`` and never stored independently,
so replaying a log or re-running a simulation reproduces them exactly.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
import queue
import threading
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import (
    IntegrityError,
    OrderingError,
    ReplayError,
    UnknownMachineError,
    ValidationError,
)

# Registry of the production line this package models. Names are exact and
# case-sensitive; everything that takes a machine argument validates against
# this tuple (or an explicit override passed to the store).
CANONICAL_MACHINES: tuple[str, ...] = (
    "Coating Machine",
    "Electrolyte Filling Machine",
    "Formation Equipment",
    "Aging Chamber",
    "Sealing Machine",
    "AGV",
)

# Metric vocabulary, in canonical order. The order matters: serialized
# payloads and simulator draw order both follow it.
METRICS: tuple[str, ...] = (
    "Temperature",
    "Pressure",
    "VibrationLevel",
    "MachineLoad",
    "PowerLoad",
    "GridUsage",
    "BatteryCapacity",
    "AGVLoad",
    "MixingSpeed",
    "CoatingThickness",
)

METRIC_UNITS: dict[str, str] = {
    "Temperature": "degC",
    "Pressure": "kPa",
    "VibrationLevel": "mm/s",
    "MachineLoad": "fraction",
    "PowerLoad": "kW",
    "GridUsage": "kW",
    "BatteryCapacity": "fraction",
    "AGVLoad": "fraction",
    "MixingSpeed": "rpm",
    "CoatingThickness": "um",
}

# Closed ranges for the dimensionless fraction metrics; other metrics are
# unconstrained apart from finiteness.
FRACTION_RANGES: dict[str, tuple[float, float]] = {
    "MachineLoad": (0.0, 1.5),
    "BatteryCapacity": (0.0, 1.0),
    "AGVLoad": (0.0, 1.5),
}

_METRIC_INDEX = {name: i for i, name in enumerate(METRICS)}

EPOCH_BASE_MS_DEFAULT = 1704067200000  # 2024-01-01T00:00:00Z
TICK_MS_DEFAULT = 1000
RING_CAPACITY_DEFAULT = 100_000
SUBSCRIBER_BUFFER = 1000


def is_canonical_machine(name: str) -> bool:
    return name in CANONICAL_MACHINES


def require_machine(name: str, machines: Iterable[str] = CANONICAL_MACHINES) -> str:
    if name not in machines:
        raise UnknownMachineError(name)
    return name


def metric_order(values: Mapping[str, float]) -> list[str]:
    """Metric names of ``values`` sorted into canonical order."""
    return sorted(values, key=_METRIC_INDEX.__getitem__)


def timestamp_for_tick(tick: int, tick_ms: int = TICK_MS_DEFAULT,
                       epoch_base_ms: int = EPOCH_BASE_MS_DEFAULT) -> int:
    return epoch_base_ms + tick * tick_ms


@dataclass(frozen=True)
class SensorReading:
    """One machine's sensor vector at one tick."""

    machine: str
    tick: int
    timestamp_ms: int
    values: Mapping[str, float]

    def validate(self, machines: Iterable[str] = CANONICAL_MACHINES) -> None:
        require_machine(self.machine, machines)
        if self.tick < 0:
            raise ValidationError(f"negative tick {self.tick}")
        if not self.values:
            raise ValidationError("reading has no metric values")
        for metric, value in self.values.items():
            if metric not in _METRIC_INDEX:
                raise ValidationError(f"unknown metric {metric!r}")
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValidationError(f"non-finite value for {metric}: {value!r}")

    def to_payload(self) -> dict:
        """JSON payload with keys, and metrics, in fixed canonical order."""
        return {
            "machine": self.machine,
            "tick": self.tick,
            "timestamp_ms": self.timestamp_ms,
            "values": {m: float(self.values[m]) for m in metric_order(self.values)},
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "SensorReading":
        return cls(
            machine=payload["machine"],
            tick=int(payload["tick"]),
            timestamp_ms=int(payload["timestamp_ms"]),
            values={str(k): float(v) for k, v in payload["values"].items()},
        )


@dataclass(frozen=True)
class AnomalyAlert:
    """A flagged reading, with attribution and a severity band."""

    machine: str
    tick: int
    timestamp_ms: int
    score: float
    severity: str  # info | warn | critical
    top_metric: str
    deviations: Mapping[str, float]  # metric -> deviation in rolling-sigma units
    category: str = "machine"  # machine | energy

    def to_payload(self) -> dict:
        return {
            "machine": self.machine,
            "tick": self.tick,
            "timestamp_ms": self.timestamp_ms,
            "score": float(self.score),
            "severity": self.severity,
            "top_metric": self.top_metric,
            "deviations": {m: float(self.deviations[m])
                           for m in metric_order(self.deviations)},
            "category": self.category,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "AnomalyAlert":
        return cls(
            machine=payload["machine"],
            tick=int(payload["tick"]),
            timestamp_ms=int(payload["timestamp_ms"]),
            score=float(payload["score"]),
            severity=payload["severity"],
            top_metric=payload["top_metric"],
            deviations={str(k): float(v) for k, v in payload["deviations"].items()},
            category=payload.get("category", "machine"),
        )


@dataclass(frozen=True)
class EventRecord:
    sequence: int
    kind: str  # reading | alert | insight | forecast | scenario | query
    payload: Mapping

    def to_json(self) -> str:
        # Key order is part of the log format; payload dicts are built in
        # fixed order by their producers, so plain dumps is deterministic.
        return json.dumps(
            {"sequence": self.sequence, "kind": self.kind, "payload": self.payload},
            separators=(",", ":"),
        )


EVENT_KINDS = ("reading", "alert", "insight", "forecast", "scenario", "query")


class EventLog:
    """Append-only JSON-lines event log with contiguous sequence numbers.

    One record per line. Appends are serialized by the owning store's lock
    (or by this class's own lock when used standalone), so sequence numbers
    stay contiguous from 0 regardless of writer interleaving.
    """

    def __init__(self, path: str | None = None):
        self.path = path
        self._lock = threading.Lock()
        self._next_seq = 0
        self._closed = False
        self._fh = open(path, "a", encoding="utf-8") if path else None

    @property
    def next_sequence(self) -> int:
        return self._next_seq

    def append(self, kind: str, payload: Mapping) -> EventRecord:
        if kind not in EVENT_KINDS:
            raise ValidationError(f"unknown event kind {kind!r}")
        with self._lock:
            if self._closed:
                raise ValidationError("event log is closed")
            record = EventRecord(self._next_seq, kind, payload)
            self._next_seq += 1
            if self._fh is not None:
                self._fh.write(record.to_json() + "\n")
        return record

    def flush(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._closed = True
            if self._fh is not None:
                self._fh.flush()
                self._fh.close()
                self._fh = None


def read_log(path: str) -> Iterator[EventRecord]:
    """Decode a log file, enforcing sequence contiguity from 0.

    Raises ReplayError (with the 1-based line number) on an undecodable line
    and IntegrityError naming the offending record on a sequence gap.
    """
    expected = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                record = EventRecord(int(obj["sequence"]), obj["kind"], obj["payload"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ReplayError(f"undecodable log record: {exc}", line=lineno) from exc
            if record.sequence != expected:
                raise IntegrityError(
                    f"sequence gap at line {lineno}: expected {expected}, "
                    f"got {record.sequence}"
                )
            expected += 1
            yield record


class Subscription:
    """A bounded event queue for one stream consumer.

    Holds at most SUBSCRIBER_BUFFER undelivered events. When the producer
    cannot enqueue (consumer too slow), the subscription is marked overflowed;
    the consumer sees the overflow marker on its next poll and must resync.
    Buffered events are discarded at that point, because completeness is
    already broken.
    """

    _CLOSED = object()

    def __init__(self, channel: str):
        self.channel = channel
        self._queue: queue.Queue = queue.Queue(maxsize=SUBSCRIBER_BUFFER)
        self._overflowed = threading.Event()
        self._closed = threading.Event()

    @property
    def overflowed(self) -> bool:
        return self._overflowed.is_set()

    @property
    def closed(self) -> bool:
        return self._closed.is_set()

    def _offer(self, item) -> None:
        if self._closed.is_set() or self._overflowed.is_set():
            return
        try:
            self._queue.put_nowait(item)
        except queue.Full:
            self._overflowed.set()

    def poll(self, timeout: float | None = None):
        """Next event dict, or None on timeout/close/overflow.

        Check ``overflowed`` when None is returned to distinguish the cases.
        """
        if self._overflowed.is_set():
            return None
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is self._CLOSED:
            return None
        return item

    def close(self) -> None:
        self._closed.set()
        try:
            self._queue.put_nowait(self._CLOSED)
        except queue.Full:
            pass


class TelemetryStore:
    """In-memory telemetry with a bounded per-machine history and an event log.

    Concurrency contract: one writer at a time per method call (all mutation
    happens under one lock), any number of readers. Readers get snapshot
    copies, never live views.
    """

    def __init__(
        self,
        machines: Iterable[str] = CANONICAL_MACHINES,
        capacity: int = RING_CAPACITY_DEFAULT,
        tick_ms: int = TICK_MS_DEFAULT,
        epoch_base_ms: int = EPOCH_BASE_MS_DEFAULT,
        log_path: str | None = None,
    ):
        if capacity <= 0:
            raise ValidationError("capacity must be positive")
        self.machines = tuple(machines)
        self.capacity = capacity
        self.tick_ms = tick_ms
        self.epoch_base_ms = epoch_base_ms
        self._lock = threading.RLock()
        self._ticks: dict[str, list[int]] = {m: [] for m in self.machines}
        self._readings: dict[str, list[SensorReading]] = {m: [] for m in self.machines}
        self._alerts: list[AnomalyAlert] = []
        self._subscribers: dict[str, list[Subscription]] = {"readings": [], "alerts": []}
        self.log = EventLog(log_path)

    # -- write side --------------------------------------------------------

    def ingest_reading(self, reading: SensorReading, log: bool = True) -> int:
        """Validate, store, log, and fan out one reading. Returns its sequence."""
        reading.validate(self.machines)
        with self._lock:
            ticks = self._ticks[reading.machine]
            if ticks and reading.tick <= ticks[-1]:
                raise OrderingError(
                    f"tick {reading.tick} for {reading.machine} is not greater "
                    f"than last tick {ticks[-1]}"
                )
            ticks.append(reading.tick)
            bucket = self._readings[reading.machine]
            bucket.append(reading)
            if len(bucket) > self.capacity:
                drop = len(bucket) - self.capacity
                del bucket[:drop]
                del ticks[:drop]
            payload = reading.to_payload()
            if log:
                record = self.log.append("reading", payload)
                seq = record.sequence
            else:
                seq = -1
            subs = list(self._subscribers["readings"])
        for sub in subs:
            sub._offer(payload)
        return seq

    def record_alert(self, alert: AnomalyAlert, log: bool = True) -> int:
        with self._lock:
            self._alerts.append(alert)
            payload = alert.to_payload()
            if log:
                record = self.log.append("alert", payload)
                seq = record.sequence
            else:
                seq = -1
            subs = list(self._subscribers["alerts"])
        for sub in subs:
            sub._offer(payload)
        return seq

    def append_event(self, kind: str, payload: Mapping) -> int:
        """Log a non-reading, non-alert event (insight, forecast, ...)."""
        with self._lock:
            record = self.log.append(kind, payload)
        return record.sequence

    def close(self) -> None:
        with self._lock:
            for subs in self._subscribers.values():
                for sub in subs:
                    sub.close()
            self.log.close()

    # -- read side ---------------------------------------------------------

    def query_window(self, machine: str, from_tick: int, to_tick: int) -> list[SensorReading]:
        """Readings with from_tick <= tick <= to_tick, ascending by tick."""
        require_machine(machine, self.machines)
        if from_tick > to_tick:
            raise ValidationError(
                f"inverted window: from_tick {from_tick} > to_tick {to_tick}"
            )
        with self._lock:
            ticks = self._ticks[machine]
            lo = bisect.bisect_left(ticks, from_tick)
            hi = bisect.bisect_right(ticks, to_tick)
            return self._readings[machine][lo:hi]

    def latest(self, machine: str) -> SensorReading | None:
        require_machine(machine, self.machines)
        with self._lock:
            bucket = self._readings[machine]
            return bucket[-1] if bucket else None

    def latest_tick(self) -> int:
        """Highest tick ingested across all machines, or -1 when empty."""
        with self._lock:
            ticks = [t[-1] for t in self._ticks.values() if t]
        return max(ticks) if ticks else -1

    def reading_count(self, machine: str) -> int:
        require_machine(machine, self.machines)
        with self._lock:
            return len(self._readings[machine])

    def alerts_since_tick(self, since_tick: int) -> list[AnomalyAlert]:
        with self._lock:
            return [a for a in self._alerts if a.tick >= since_tick]

    def alerts_in_window(self, window_ticks: int) -> list[AnomalyAlert]:
        """Alerts within the trailing window, measured from the latest tick."""
        if window_ticks < 0:
            raise ValidationError("window must be non-negative")
        last = self.latest_tick()
        if last < 0:
            return []
        return self.alerts_since_tick(last - window_ticks + 1)

    def all_alerts(self) -> list[AnomalyAlert]:
        with self._lock:
            return list(self._alerts)

    def subscribe(self, channel: str) -> Subscription:
        if channel not in self._subscribers:
            raise ValidationError(f"unknown channel {channel!r}")
        sub = Subscription(channel)
        with self._lock:
            self._subscribers[channel].append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            try:
                self._subscribers[sub.channel].remove(sub)
            except ValueError:
                pass
        sub.close()

    # -- replay ------------------------------------------------------------

    @classmethod
    def replay(cls, path: str, **kwargs) -> "TelemetryStore":
        """Rebuild a store from a log file; the result answers queries
        identically to the store that wrote the log."""
        store = cls(**kwargs)
        for record in read_log(path):
            if record.kind == "reading":
                reading = SensorReading.from_payload(record.payload)
                store.ingest_reading(reading, log=False)
            elif record.kind == "alert":
                store.record_alert(AnomalyAlert.from_payload(record.payload), log=False)
            # insight/forecast/scenario/query records carry no store state
            store.log._next_seq = record.sequence + 1
        return store


# -- CSV interchange --------------------------------------------------------

CSV_HEADER = ["machine", "tick", "metric", "value"]


def write_csv(readings: Iterable[SensorReading], path: str) -> None:
    """Write readings as long-format rows: machine,tick,metric,value."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for reading in readings:
            for metric in metric_order(reading.values):
                writer.writerow(
                    [reading.machine, reading.tick, metric,
                     repr(float(reading.values[metric]))]
                )


def read_csv(path: str, tick_ms: int = TICK_MS_DEFAULT,
             epoch_base_ms: int = EPOCH_BASE_MS_DEFAULT) -> list[SensorReading]:
    """Read long-format CSV back into readings, grouped by (machine, tick).

    Rows may arrive in any order; the result is sorted by tick then by
    canonical machine order, one reading per (machine, tick).
    """
    grouped: dict[tuple[int, str], dict[str, float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValidationError(
                f"bad CSV header {header!r}, expected {CSV_HEADER!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValidationError(f"line {lineno}: expected 4 columns, got {len(row)}")
            machine, tick_s, metric, value_s = row
            if metric not in _METRIC_INDEX:
                raise ValidationError(f"line {lineno}: unknown metric {metric!r}")
            try:
                tick = int(tick_s)
                value = float(value_s)
            except ValueError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
            grouped.setdefault((tick, machine), {})[metric] = value

    machine_rank = {m: i for i, m in enumerate(CANONICAL_MACHINES)}
    readings = []
    for (tick, machine) in sorted(grouped, key=lambda k: (k[0], machine_rank.get(k[1], 99), k[1])):
        readings.append(SensorReading(
            machine=machine,
            tick=tick,
            timestamp_ms=timestamp_for_tick(tick, tick_ms, epoch_base_ms),
            values=grouped[(tick, machine)],
        ))
    return readings
