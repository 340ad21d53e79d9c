"""What-if evaluation of production-line settings.

A scenario is three dimensionless multipliers relative to current operation:
line speed, machine speed, and cooling intensity. Closed-form response
surfaces (coefficients shipped in data/scenario_coefficients.json) map the
multipliers to expected throughput, energy draw, and defect rate. Baselines
come from observed telemetry so the same knobs give plant-specific answers.

The surfaces are anchored so that (1, 1, 1) reproduces the baseline exactly:
throughput equals the baseline, energy equals the baseline, and defects sit
at the base rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .core import SensorReading
from .errors import InsufficientDataError, ParseError, ValidationError

UNITS_PER_LOAD_HOUR = 100.0


@dataclass(frozen=True)
class ScenarioCoefficients:
    throughput_speed_exp: float
    throughput_cap: float
    energy_line_exp: float
    energy_speed_exp: float
    cooling_penalty: float
    defect_base: float
    defect_cooling_coef: float
    defect_speed_coef: float
    defect_speed_knee: float
    input_lo: float
    input_hi: float

    @classmethod
    def default(cls) -> "ScenarioCoefficients":
        text = resources.files("smartline.data").joinpath(
            "scenario_coefficients.json").read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioCoefficients":
        try:
            lo, hi = doc["input_range"]
            return cls(
                throughput_speed_exp=float(doc["throughput"]["speed_exponent"]),
                throughput_cap=float(doc["throughput"]["cap_factor"]),
                energy_line_exp=float(doc["energy"]["line_exponent"]),
                energy_speed_exp=float(doc["energy"]["speed_exponent"]),
                cooling_penalty=float(doc["energy"]["cooling_penalty"]),
                defect_base=float(doc["defect"]["base_rate"]),
                defect_cooling_coef=float(doc["defect"]["cooling_coef"]),
                defect_speed_coef=float(doc["defect"]["speed_coef"]),
                defect_speed_knee=float(doc["defect"]["speed_knee"]),
                input_lo=float(lo),
                input_hi=float(hi),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed scenario coefficients: {exc!r}") from exc


@dataclass(frozen=True)
class Baseline:
    throughput_units_h: float
    energy_kw: float
    defect_rate: float

    def validate(self) -> None:
        if self.throughput_units_h <= 0:
            raise ValidationError("baseline throughput must be positive")
        if self.energy_kw <= 0:
            raise ValidationError("baseline energy must be positive")
        if not 0 <= self.defect_rate <= 1:
            raise ValidationError("baseline defect rate must be in [0, 1]")


def baseline_from_readings(readings: Sequence[SensorReading],
                           coeffs: ScenarioCoefficients | None = None) -> Baseline:
    """Derive baseline throughput/energy from telemetry.

    Throughput proxy: mean MachineLoad across readings times a fixed
    units-per-load-hour constant. Energy: mean plant-total PowerLoad.
    """
    coeffs = coeffs or ScenarioCoefficients.default()
    loads, power_by_tick = [], {}
    for r in readings:
        if "MachineLoad" in r.values:
            loads.append(float(r.values["MachineLoad"]))
        power_by_tick[r.tick] = (power_by_tick.get(r.tick, 0.0)
                                 + float(r.values.get("PowerLoad", 0.0)))
    if not loads or not power_by_tick:
        raise InsufficientDataError(
            "need MachineLoad and PowerLoad readings to derive a baseline"
        )
    return Baseline(
        throughput_units_h=float(np.mean(loads)) * UNITS_PER_LOAD_HOUR,
        energy_kw=float(np.mean(list(power_by_tick.values()))),
        defect_rate=coeffs.defect_base,
    )


@dataclass(frozen=True)
class ScenarioInput:
    name: str
    line_speed: float = 1.0
    machine_speed: float = 1.0
    cooling: float = 1.0

    def validate(self, coeffs: ScenarioCoefficients) -> None:
        if not self.name:
            raise ValidationError("scenario needs a name")
        for label, v in (("line_speed", self.line_speed),
                         ("machine_speed", self.machine_speed),
                         ("cooling", self.cooling)):
            if not np.isfinite(v):
                raise ValidationError(f"{label} must be finite")
            if not coeffs.input_lo <= v <= coeffs.input_hi:
                raise ValidationError(
                    f"{label}={v} outside [{coeffs.input_lo}, {coeffs.input_hi}]"
                )


@dataclass(frozen=True)
class ScenarioOutcome:
    name: str
    line_speed: float
    machine_speed: float
    cooling: float
    throughput_units_h: float
    energy_kw: float
    defect_rate: float
    efficiency: float  # throughput per kW
    rank: int = 0

    def to_payload(self) -> dict:
        return {
            "name": self.name,
            "line_speed": self.line_speed,
            "machine_speed": self.machine_speed,
            "cooling": self.cooling,
            "throughput_units_h": self.throughput_units_h,
            "energy_kw": self.energy_kw,
            "defect_rate": self.defect_rate,
            "efficiency": self.efficiency,
            "rank": self.rank,
        }


def evaluate(scenario: ScenarioInput, baseline: Baseline,
             coeffs: ScenarioCoefficients | None = None) -> ScenarioOutcome:
    coeffs = coeffs or ScenarioCoefficients.default()
    baseline.validate()
    scenario.validate(coeffs)
    l, m, c = scenario.line_speed, scenario.machine_speed, scenario.cooling

    throughput = min(
        baseline.throughput_units_h * (m ** coeffs.throughput_speed_exp) * l,
        coeffs.throughput_cap * baseline.throughput_units_h,
    )
    energy = (baseline.energy_kw
              * (l ** coeffs.energy_line_exp)
              * (m ** coeffs.energy_speed_exp)
              * (1.0 + coeffs.cooling_penalty * (c - 1.0) ** 2))
    defect = (coeffs.defect_base
              + coeffs.defect_cooling_coef * abs(c - 1.0)
              + coeffs.defect_speed_coef * max(0.0, m - coeffs.defect_speed_knee))
    defect = min(max(defect, 0.0), 1.0)

    return ScenarioOutcome(
        name=scenario.name, line_speed=l, machine_speed=m, cooling=c,
        throughput_units_h=throughput, energy_kw=energy, defect_rate=defect,
        efficiency=throughput / energy)


def compare(scenarios: Sequence[ScenarioInput], baseline: Baseline,
            coeffs: ScenarioCoefficients | None = None) -> list[ScenarioOutcome]:
    """Evaluate and rank: best efficiency first, defects break ties, and
    equal candidates keep their input order."""
    coeffs = coeffs or ScenarioCoefficients.default()
    if not scenarios:
        raise ValidationError("nothing to compare")
    outcomes = [evaluate(s, baseline, coeffs) for s in scenarios]
    order = sorted(range(len(outcomes)),
                   key=lambda i: (-outcomes[i].efficiency,
                                  outcomes[i].defect_rate, i))
    ranked = []
    for rank, i in enumerate(order, start=1):
        o = outcomes[i]
        ranked.append(ScenarioOutcome(
            name=o.name, line_speed=o.line_speed, machine_speed=o.machine_speed,
            cooling=o.cooling, throughput_units_h=o.throughput_units_h,
            energy_kw=o.energy_kw, defect_rate=o.defect_rate,
            efficiency=o.efficiency, rank=rank))
    return ranked
