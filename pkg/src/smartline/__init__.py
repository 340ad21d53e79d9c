"""Smart production line telemetry: simulation, detection, prediction,
forecasting, what-if analysis, and an operator Q&A service."""

from .core import (
    CANONICAL_MACHINES,
    METRICS,
    AnomalyAlert,
    EventLog,
    SensorReading,
    TelemetryStore,
    read_csv,
    read_log,
    write_csv,
)
from .errors import SmartlineError
from .forest import fit_classifier, fit_regressor, predict, predict_proba
from .isoforest import StreamingDetector, detect_stream, fit_isoforest, score_batch
from .maintenance import (
    MaintenanceInsight,
    assess_risk,
    generate_insights,
    train_risk_model,
)
from .energy import forecast, train_energy_model
from .plantsim import MachineProfile, SimConfig, Simulator, default_profiles, run_stream
from .scenario import Baseline, ScenarioInput, compare, evaluate
from .assistant import answer, parse_intent
from .pipeline import run_pipeline
from .rng import Rng

__version__ = "0.1.0"

__all__ = [
    "AnomalyAlert",
    "Baseline",
    "CANONICAL_MACHINES",
    "EventLog",
    "METRICS",
    "MachineProfile",
    "MaintenanceInsight",
    "Rng",
    "ScenarioInput",
    "SensorReading",
    "SimConfig",
    "Simulator",
    "SmartlineError",
    "StreamingDetector",
    "TelemetryStore",
    "answer",
    "assess_risk",
    "compare",
    "default_profiles",
    "detect_stream",
    "evaluate",
    "fit_classifier",
    "fit_isoforest",
    "fit_regressor",
    "forecast",
    "generate_insights",
    "parse_intent",
    "predict",
    "predict_proba",
    "read_csv",
    "read_log",
    "run_pipeline",
    "run_stream",
    "score_batch",
    "train_energy_model",
    "train_risk_model",
    "write_csv",
    "__version__",
]
