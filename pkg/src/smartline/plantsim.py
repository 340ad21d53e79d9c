"""Deterministic battery production line simulator.

Every metric value is the superposition of four additive parts:

    value = baseline * (1 + diurnal_amplitude * sin(2*pi*t*tick_s/86400))
            + drift(t) + spike(t) + noise_sigma * z(t)

where ``t`` is the tick, ``tick_s = tick_ms / 1000``, drift comes from active
degradation episodes, spike from active fault windows, and ``z`` is a standard
normal from the documented generator (see rng.py).

Draw order is pinned: each machine owns the substream
``Rng.for_stream(seed, machine_name)`` and consumes one gaussian per profile
metric per tick, metrics in canonical order. Zero-sigma metrics still consume
their draw so the stream layout never depends on profile values.

A degradation episode starts drifting at its start tick and ends at the first
tick whose emitted value reaches the failure threshold (the crossing). From
the next tick on, the drift contribution is zero again: the machine is
treated as repaired and returns to baseline. This is what makes the labeling
rule exact: each episode yields one crossing, and exactly the ``horizon``
ticks before it are labeled positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .core import (
    CANONICAL_MACHINES,
    EPOCH_BASE_MS_DEFAULT,
    FRACTION_RANGES,
    METRICS,
    TICK_MS_DEFAULT,
    SensorReading,
    metric_order,
    require_machine,
    timestamp_for_tick,
)
from .errors import ExhaustedError, ParseError, ValidationError, VersionError
from .rng import Rng


@dataclass(frozen=True)
class MachineProfile:
    machine: str
    baselines: dict[str, float]
    noise_sigma: dict[str, float]
    failure_thresholds: dict[str, float] = field(default_factory=dict)

    @property
    def metrics(self) -> list[str]:
        """Profile metrics in canonical order (also the draw order)."""
        return metric_order(self.baselines)

    def validate(self) -> None:
        require_machine(self.machine)
        if not self.baselines:
            raise ValidationError(f"profile for {self.machine} has no metrics")
        for metric, value in self.baselines.items():
            if metric not in METRICS:
                raise ValidationError(f"unknown metric {metric!r} in profile")
            if not math.isfinite(value):
                raise ValidationError(f"non-finite baseline for {metric}")
            rng_range = FRACTION_RANGES.get(metric)
            if rng_range and not (rng_range[0] <= value <= rng_range[1]):
                raise ValidationError(
                    f"{self.machine} baseline for {metric} outside {rng_range}"
                )
        for metric, sigma in self.noise_sigma.items():
            if metric not in self.baselines:
                raise ValidationError(f"noise_sigma for unknown metric {metric!r}")
            if not math.isfinite(sigma) or sigma < 0:
                raise ValidationError(f"bad noise_sigma for {metric}: {sigma}")
        for metric in self.baselines:
            if metric not in self.noise_sigma:
                raise ValidationError(f"{self.machine}: {metric} missing noise_sigma")
        for metric, thr in self.failure_thresholds.items():
            if metric not in self.baselines:
                raise ValidationError(
                    f"{self.machine}: threshold on {metric} without a baseline"
                )
            if not math.isfinite(thr):
                raise ValidationError(f"non-finite threshold for {metric}")


@dataclass(frozen=True)
class FaultSpec:
    """Additive spike: magnitude is in units of the metric's noise_sigma."""

    machine: str
    metric: str
    start_tick: int
    duration: int
    magnitude_sigmas: float

    @property
    def end_tick(self) -> int:
        """First tick after the fault window."""
        return self.start_tick + self.duration


@dataclass(frozen=True)
class DegradationSpec:
    """Linear drift toward the metric's failure threshold."""

    machine: str
    metric: str
    start_tick: int
    drift_per_tick: float


@dataclass(frozen=True)
class SimConfig:
    seed: int
    ticks: int
    profiles: tuple[MachineProfile, ...]
    diurnal_amplitude: float = 0.0
    tick_ms: int = TICK_MS_DEFAULT
    epoch_base_ms: int = EPOCH_BASE_MS_DEFAULT
    degradations: tuple[DegradationSpec, ...] = ()
    faults: tuple[FaultSpec, ...] = ()

    def profile_for(self, machine: str) -> MachineProfile:
        for profile in self.profiles:
            if profile.machine == machine:
                return profile
        raise ValidationError(f"no profile for machine {machine!r}")

    def validate(self) -> None:
        if self.ticks < 1:
            raise ValidationError("ticks must be >= 1")
        if self.tick_ms < 1:
            raise ValidationError("tick_ms must be >= 1")
        if not (0.0 <= self.diurnal_amplitude < 1.0):
            raise ValidationError("diurnal_amplitude must be in [0, 1)")
        if not self.profiles:
            raise ValidationError("no machine profiles configured")
        seen = set()
        for profile in self.profiles:
            profile.validate()
            if profile.machine in seen:
                raise ValidationError(f"duplicate profile for {profile.machine}")
            seen.add(profile.machine)
        deg_keys = set()
        for spec in self.degradations:
            profile = self.profile_for(spec.machine)
            if spec.metric not in profile.baselines:
                raise ValidationError(
                    f"degradation on {spec.machine}/{spec.metric}: metric not in profile"
                )
            threshold = profile.failure_thresholds.get(spec.metric)
            if threshold is None:
                raise ValidationError(
                    f"degradation on {spec.machine}/{spec.metric}: no failure threshold"
                )
            if spec.drift_per_tick == 0 or not math.isfinite(spec.drift_per_tick):
                raise ValidationError("drift_per_tick must be finite and non-zero")
            direction = threshold - profile.baselines[spec.metric]
            if direction == 0 or (direction > 0) != (spec.drift_per_tick > 0):
                raise ValidationError(
                    f"degradation on {spec.machine}/{spec.metric}: drift does not "
                    "move toward the threshold"
                )
            if spec.start_tick < 0:
                raise ValidationError("degradation start_tick must be >= 0")
            key = (spec.machine, spec.metric)
            if key in deg_keys:
                raise ValidationError(
                    f"multiple degradations on {spec.machine}/{spec.metric}"
                )
            deg_keys.add(key)
        _validate_faults(self.faults, {p.machine: p for p in self.profiles})


def _validate_faults(faults: Sequence[FaultSpec],
                     profiles: dict[str, MachineProfile]) -> None:
    windows: dict[tuple[str, str], list[tuple[int, int]]] = {}
    for spec in faults:
        profile = profiles.get(spec.machine)
        if profile is None:
            raise ValidationError(f"fault on unknown machine {spec.machine!r}")
        if spec.metric not in profile.baselines:
            raise ValidationError(
                f"fault on {spec.machine}/{spec.metric}: metric not in profile"
            )
        if spec.duration < 1:
            raise ValidationError("fault duration must be >= 1")
        if spec.start_tick < 0:
            raise ValidationError("fault start_tick must be >= 0")
        if not math.isfinite(spec.magnitude_sigmas):
            raise ValidationError("fault magnitude must be finite")
        key = (spec.machine, spec.metric)
        for (lo, hi) in windows.get(key, ()):
            if spec.start_tick < hi and lo < spec.end_tick:
                raise ValidationError(
                    f"overlapping faults on {spec.machine}/{spec.metric}"
                )
        windows.setdefault(key, []).append((spec.start_tick, spec.end_tick))


@dataclass(frozen=True)
class CrossingEvent:
    """First tick at which a degradation episode's emitted value reached
    its failure threshold."""

    machine: str
    metric: str
    tick: int
    threshold: float


class _Episode:
    __slots__ = ("spec", "threshold", "upward", "crossed_at")

    def __init__(self, spec: DegradationSpec, threshold: float):
        self.spec = spec
        self.threshold = threshold
        self.upward = spec.drift_per_tick > 0
        self.crossed_at: int | None = None

    def drift_at(self, tick: int) -> float:
        if self.crossed_at is not None or tick < self.spec.start_tick:
            return 0.0
        return self.spec.drift_per_tick * (tick - self.spec.start_tick + 1)

    def observe(self, tick: int, value: float) -> bool:
        """Record a crossing if the emitted value reached the threshold."""
        if self.crossed_at is not None or tick < self.spec.start_tick:
            return False
        if (value >= self.threshold) if self.upward else (value <= self.threshold):
            self.crossed_at = tick
            return True
        return False


class Simulator:
    """Steps a SimConfig one tick at a time, one reading per machine."""

    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        self.tick = 0
        self._rngs = {p.machine: Rng.for_stream(config.seed, p.machine)
                      for p in config.profiles}
        self._episodes: dict[str, list[_Episode]] = {}
        for spec in config.degradations:
            threshold = config.profile_for(spec.machine).failure_thresholds[spec.metric]
            self._episodes.setdefault(spec.machine, []).append(_Episode(spec, threshold))
        self._faults: dict[str, list[FaultSpec]] = {}
        for fault in config.faults:
            self._faults.setdefault(fault.machine, []).append(fault)
        self._omega = 2.0 * math.pi * (config.tick_ms / 1000.0) / 86400.0

    @property
    def crossings(self) -> list[CrossingEvent]:
        events = []
        for machine in (p.machine for p in self.config.profiles):
            for ep in self._episodes.get(machine, ()):
                if ep.crossed_at is not None:
                    events.append(CrossingEvent(
                        machine=ep.spec.machine, metric=ep.spec.metric,
                        tick=ep.crossed_at, threshold=ep.threshold))
        events.sort(key=lambda e: e.tick)
        return events

    def step(self) -> list[SensorReading]:
        if self.tick >= self.config.ticks:
            raise ExhaustedError(
                f"simulation horizon of {self.config.ticks} ticks reached"
            )
        t = self.tick
        diurnal = 1.0 + self.config.diurnal_amplitude * math.sin(self._omega * t)
        timestamp = timestamp_for_tick(t, self.config.tick_ms, self.config.epoch_base_ms)
        readings = []
        for profile in self.config.profiles:
            metrics = profile.metrics
            z = self._rngs[profile.machine].gaussian_block(len(metrics))
            episodes = self._episodes.get(profile.machine, ())
            faults = self._faults.get(profile.machine, ())
            values: dict[str, float] = {}
            for j, metric in enumerate(metrics):
                value = profile.baselines[metric] * diurnal
                for ep in episodes:
                    if ep.spec.metric == metric:
                        value += ep.drift_at(t)
                for fault in faults:
                    if fault.metric == metric and fault.start_tick <= t < fault.end_tick:
                        value += fault.magnitude_sigmas * profile.noise_sigma[metric]
                value += profile.noise_sigma[metric] * float(z[j])
                values[metric] = value
                for ep in episodes:
                    if ep.spec.metric == metric:
                        ep.observe(t, value)
            readings.append(SensorReading(
                machine=profile.machine, tick=t, timestamp_ms=timestamp, values=values))
        self.tick += 1
        return readings

    def run(self) -> list[SensorReading]:
        """All remaining ticks as a flat stream (machine-major within a tick)."""
        out: list[SensorReading] = []
        while self.tick < self.config.ticks:
            out.extend(self.step())
        return out


def run_stream(config: SimConfig) -> tuple[list[SensorReading], list[CrossingEvent]]:
    sim = Simulator(config)
    readings = sim.run()
    return readings, sim.crossings


@dataclass
class LabeledDataset:
    """Per-tick raw metric rows with look-ahead failure labels.

    Row order is tick-major, machine order within a tick as configured.
    label[i] == 1 iff the row's machine has a crossing c with
    0 < c - tick[i] <= horizon.
    """

    feature_names: list[str]
    X: np.ndarray
    y: np.ndarray
    machines: list[str]
    ticks: np.ndarray
    crossings: list[CrossingEvent]
    readings: list[SensorReading]
    horizon: int
    warning: str | None = None


def common_metrics(profiles: Iterable[MachineProfile]) -> list[str]:
    """Metrics present in every profile, canonical order."""
    sets = [set(p.baselines) for p in profiles]
    if not sets:
        return []
    shared = set.intersection(*sets)
    return [m for m in METRICS if m in shared]


def generate_labeled_dataset(config: SimConfig, horizon: int) -> LabeledDataset:
    if horizon < 1:
        raise ValidationError("horizon must be >= 1")
    readings, crossings = run_stream(config)
    feature_names = common_metrics(config.profiles)
    if not feature_names:
        raise ValidationError("profiles share no common metrics")
    warning = None
    if not config.degradations:
        warning = "no degradations configured: positive class is empty"

    crossing_ticks: dict[str, list[int]] = {}
    for event in crossings:
        crossing_ticks.setdefault(event.machine, []).append(event.tick)

    n = len(readings)
    X = np.empty((n, len(feature_names)), dtype=np.float64)
    y = np.zeros(n, dtype=np.int64)
    ticks = np.empty(n, dtype=np.int64)
    machines: list[str] = []
    for i, reading in enumerate(readings):
        for j, metric in enumerate(feature_names):
            X[i, j] = reading.values[metric]
        ticks[i] = reading.tick
        machines.append(reading.machine)
        for c in crossing_ticks.get(reading.machine, ()):
            if 0 < c - reading.tick <= horizon:
                y[i] = 1
                break
    return LabeledDataset(
        feature_names=feature_names, X=X, y=y, machines=machines, ticks=ticks,
        crossings=crossings, readings=readings, horizon=horizon, warning=warning)


@dataclass(frozen=True)
class FaultTruth:
    machine: str
    metric: str
    start_tick: int
    end_tick: int  # exclusive


def inject_faults(
    readings: Sequence[SensorReading],
    faults: Sequence[FaultSpec],
    profiles: Sequence[MachineProfile],
) -> tuple[list[SensorReading], list[FaultTruth]]:
    """Overlay additive spikes on an existing stream.

    Returns the transformed stream plus ground-truth intervals. The input
    stream is not modified.
    """
    by_machine = {p.machine: p for p in profiles}
    _validate_faults(faults, by_machine)
    if not readings:
        raise ValidationError("empty stream")
    lo = min(r.tick for r in readings)
    hi = max(r.tick for r in readings)
    for spec in faults:
        if spec.start_tick < lo or spec.end_tick > hi + 1:
            raise ValidationError(
                f"fault window [{spec.start_tick}, {spec.end_tick}) outside "
                f"stream range [{lo}, {hi}]"
            )
    fault_map: dict[str, list[FaultSpec]] = {}
    for spec in faults:
        fault_map.setdefault(spec.machine, []).append(spec)

    out: list[SensorReading] = []
    for reading in readings:
        active = [f for f in fault_map.get(reading.machine, ())
                  if f.start_tick <= reading.tick < f.end_tick]
        if not active:
            out.append(reading)
            continue
        values = dict(reading.values)
        for f in active:
            sigma = by_machine[f.machine].noise_sigma[f.metric]
            values[f.metric] = values[f.metric] + f.magnitude_sigmas * sigma
        out.append(replace(reading, values=values))
    truth = [FaultTruth(f.machine, f.metric, f.start_tick, f.end_tick) for f in faults]
    return out, truth


# -- configuration files -----------------------------------------------------

def default_profiles() -> tuple[MachineProfile, ...]:
    raw = resources.files("smartline.data").joinpath("default_profiles.json").read_text()
    doc = json.loads(raw)
    return tuple(_profile_from_dict(p) for p in doc["profiles"])


def _profile_from_dict(obj: dict) -> MachineProfile:
    return MachineProfile(
        machine=obj["machine"],
        baselines={k: float(v) for k, v in obj["baselines"].items()},
        noise_sigma={k: float(v) for k, v in obj["noise_sigma"].items()},
        failure_thresholds={k: float(v)
                            for k, v in obj.get("failure_thresholds", {}).items()},
    )


def _profile_to_dict(profile: MachineProfile) -> dict:
    return {
        "machine": profile.machine,
        "baselines": {m: profile.baselines[m] for m in profile.metrics},
        "noise_sigma": {m: profile.noise_sigma[m] for m in profile.metrics},
        "failure_thresholds": {m: profile.failure_thresholds[m]
                               for m in metric_order(profile.failure_thresholds)},
    }


def config_to_dict(config: SimConfig) -> dict:
    return {
        "version": 1,
        "seed": config.seed,
        "ticks": config.ticks,
        "tick_ms": config.tick_ms,
        "epoch_base_ms": config.epoch_base_ms,
        "diurnal_amplitude": config.diurnal_amplitude,
        "profiles": [_profile_to_dict(p) for p in config.profiles],
        "degradations": [
            {"machine": d.machine, "metric": d.metric,
             "start_tick": d.start_tick, "drift_per_tick": d.drift_per_tick}
            for d in config.degradations
        ],
        "faults": [
            {"machine": f.machine, "metric": f.metric, "start_tick": f.start_tick,
             "duration": f.duration, "magnitude_sigmas": f.magnitude_sigmas}
            for f in config.faults
        ],
    }


def config_from_dict(doc: dict) -> SimConfig:
    try:
        if doc.get("version", 1) != 1:
            raise VersionError(f"unsupported config version {doc.get('version')!r}")
        profiles = tuple(_profile_from_dict(p) for p in doc["profiles"]) \
            if doc.get("profiles") else default_profiles()
        config = SimConfig(
            seed=int(doc["seed"]),
            ticks=int(doc["ticks"]),
            profiles=profiles,
            diurnal_amplitude=float(doc.get("diurnal_amplitude", 0.0)),
            tick_ms=int(doc.get("tick_ms", TICK_MS_DEFAULT)),
            epoch_base_ms=int(doc.get("epoch_base_ms", EPOCH_BASE_MS_DEFAULT)),
            degradations=tuple(
                DegradationSpec(d["machine"], d["metric"], int(d["start_tick"]),
                                float(d["drift_per_tick"]))
                for d in doc.get("degradations", ())
            ),
            faults=tuple(
                FaultSpec(f["machine"], f["metric"], int(f["start_tick"]),
                          int(f["duration"]), float(f["magnitude_sigmas"]))
                for f in doc.get("faults", ())
            ),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad simulation config: {exc!r}") from exc
    config.validate()
    return config


def load_config(path: str) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"bad simulation config JSON at line {exc.lineno} col {exc.colno}: "
                f"{exc.msg}"
            ) from exc
    return config_from_dict(doc)


def save_config(config: SimConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2)
        fh.write("\n")
