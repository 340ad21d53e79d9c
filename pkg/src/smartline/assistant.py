"""Rule-based operator Q&A with an optional remote completion hook.

Questions are parsed into typed intents and answered from live telemetry,
so every number in an answer comes from a backend lookup rather than text
generation. When a remote completion endpoint is configured the grounded
facts are sent along for nicer phrasing; any remote failure falls back to
the rule-based wording. Answers carry a `source` field saying which path
produced the text.

Parse order matters and is fixed: multi-part splitting first, then
forecast, failure ranking, maintenance, anomaly, power, and finally plain
metric lookup. Earlier rules win because their trigger words are more
specific ("power forecast" must not be swallowed by the power-load rule).
"""

from __future__ import annotations

import json
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

from .core import CANONICAL_MACHINES, METRIC_UNITS
from .errors import ParseError, RemoteAdapterError

REMOTE_ENDPOINT_ENV = "SMARTLINE_ASSISTANT_ENDPOINT"
REMOTE_API_KEY_ENV = "SMARTLINE_ASSISTANT_API_KEY"
REMOTE_MAX_TOKENS = 100
REMOTE_TIMEOUT_S = 5.0

FUZZY_THRESHOLD = 0.3
DEFAULT_WINDOW_S = 3600
DEFAULT_FORECAST_TICKS = 24

# Longest phrases first so "coating thickness" beats "coating".
METRIC_SYNONYMS: tuple[tuple[str, str], ...] = (
    ("coating thickness", "CoatingThickness"),
    ("thickness of the coating", "CoatingThickness"),
    ("mixing speed", "MixingSpeed"),
    ("battery capacity", "BatteryCapacity"),
    ("machine load", "MachineLoad"),
    ("power load", "PowerLoad"),
    ("grid usage", "GridUsage"),
    ("agv load", "AGVLoad"),
    ("thickness", "CoatingThickness"),
    ("vibration", "VibrationLevel"),
    ("temperature", "Temperature"),
    ("pressure", "Pressure"),
    ("battery", "BatteryCapacity"),
    ("grid", "GridUsage"),
)

_ANOMALY_WORDS = ("anomal", "strange", "unusual", "odd", "abnormal",
                  "outlier", "weird", "irregular")
_FAILURE_WORDS = ("fail", "break", "breakdown", "risk")
_MAINTENANCE_WORDS = ("maint", "repair", "service", "task", "schedule")

_UNIT_SECONDS = {"second": 1, "minute": 60, "hour": 3600, "day": 86400}


@dataclass(frozen=True)
class Intent:
    kind: str                     # forecast | failure_ranking | maintenance |
                                  # anomaly | power | metric | multi | unknown
    machine: str | None = None
    metric: str | None = None
    window_s: int | None = None
    horizon_ticks: int | None = None
    parts: tuple["Intent", ...] = ()


def normalize(text: str) -> str:
    return re.sub(r"[^a-z0-9 ]+", " ", text.lower()).strip()


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def match_machine(question: str,
                  machines: Sequence[str] = CANONICAL_MACHINES) -> str | None:
    """Best fuzzy machine mention, or None.

    Every n-gram of the question (n within one word of the machine name's
    length) is compared by Levenshtein distance normalized by the machine
    name's length; the best ratio wins if it clears FUZZY_THRESHOLD. This
    tolerates spelling variants like "ageing chamber" for Aging Chamber.
    """
    words = normalize(question).split()
    if not words:
        return None
    best_name, best_ratio = None, FUZZY_THRESHOLD
    for machine in machines:
        target = normalize(machine)
        n_target = len(target.split())
        for n in range(max(1, n_target - 1), n_target + 2):
            for i in range(len(words) - n + 1):
                gram = " ".join(words[i:i + n])
                ratio = levenshtein(gram, target) / max(len(target), 1)
                if ratio < best_ratio:
                    best_name, best_ratio = machine, ratio
    return best_name


def match_metric(question: str) -> str | None:
    q = normalize(question)
    for phrase, metric in METRIC_SYNONYMS:
        if phrase in q:
            return metric
    return None


def parse_window_seconds(question: str) -> int | None:
    q = normalize(question)
    m = re.search(r"(?:last|past)\s+(\d+)\s*(second|minute|hour|day)s?", q)
    if m:
        return int(m.group(1)) * _UNIT_SECONDS[m.group(2)]
    m = re.search(r"(?:last|past)\s+(second|minute|hour|day)\b", q)
    if m:
        return _UNIT_SECONDS[m.group(1)]
    return None


def parse_horizon_ticks(question: str) -> int | None:
    q = normalize(question)
    m = re.search(r"next\s+(\d+)\s*(tick|step|second|minute|hour|day)s?", q)
    if m:
        return int(m.group(1))
    return None


_SPLIT_RE = re.compile(r"(?:\?\s+|;\s*|,?\s+and\s+(?:also\s+)?(?=what|which|were|are|is|how|when|will)|\.\s+)",
                       re.IGNORECASE)


def parse_intent(question: str) -> Intent:
    if not question or not question.strip():
        raise ParseError("empty question")

    pieces = [p for p in _SPLIT_RE.split(question.strip()) if p and p.strip()]
    if len(pieces) > 1:
        parts = tuple(_parse_single(p) for p in pieces)
        return Intent(kind="multi", parts=parts)
    return _parse_single(question)


def _parse_single(question: str) -> Intent:
    q = normalize(question)
    machine = match_machine(question)
    metric = match_metric(question)
    window = parse_window_seconds(question)

    if any(w in q for w in ("forecast", "predict")) or (
            "next" in q and ("power" in q or "energy" in q)):
        return Intent(kind="forecast", machine=machine,
                      horizon_ticks=parse_horizon_ticks(question)
                      or DEFAULT_FORECAST_TICKS)
    if any(w in q for w in _FAILURE_WORDS) and (
            "which" in q or "most likely" in q or "machines" in q):
        return Intent(kind="failure_ranking")
    if any(w in q for w in _MAINTENANCE_WORDS):
        return Intent(kind="maintenance", machine=machine)
    if any(w in q for w in _ANOMALY_WORDS) or (
            "events" in q and ("detect" in q or window is not None)):
        return Intent(kind="anomaly", machine=machine,
                      window_s=window or DEFAULT_WINDOW_S)
    if metric == "PowerLoad" or ("power" in q and metric is None):
        return Intent(kind="power", machine=machine, metric="PowerLoad")
    if metric is not None:
        return Intent(kind="metric", machine=machine, metric=metric)
    if any(w in q for w in _FAILURE_WORDS):
        return Intent(kind="failure_ranking")
    return Intent(kind="unknown")


class Backend(Protocol):
    """Telemetry operations the assistant can invoke (one per intent)."""

    def failure_ranking(self) -> list[dict]: ...

    def latest_metric(self, machine: str, metric: str) -> dict: ...

    def anomalies_in_window(self, window_s: int,
                            machine: str | None = None) -> list[dict]: ...

    def forecast_power(self, horizon_ticks: int) -> dict: ...

    def maintenance_plan(self, machine: str | None = None) -> list[dict]: ...


@dataclass(frozen=True)
class AssistantAnswer:
    text: str
    intent: Intent
    data: dict
    source: str = "rule"

    def to_payload(self) -> dict:
        return {
            "text": self.text,
            "intent": self.intent.kind,
            "machine": self.intent.machine,
            "metric": self.intent.metric,
            "data": self.data,
            "source": self.source,
        }


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def dispatch(intent: Intent, backend: Backend) -> AssistantAnswer:
    """Answer one intent with exactly one backend call.

    Multi-part questions are declined rather than half-answered: guessing
    which part the operator cares about produces worse answers than asking
    them to split the question.
    """
    if intent.kind == "multi":
        return AssistantAnswer(
            f"One question at a time, please. That looks like "
            f"{len(intent.parts)} questions; ask each one separately.",
            intent, {"parts": [p.kind for p in intent.parts]})

    if intent.kind == "failure_ranking":
        ranking = backend.failure_ranking()
        if not ranking:
            return AssistantAnswer("No machine currently shows an elevated "
                                   "failure risk.", intent, {"ranking": []})
        lead = ", ".join(f"{r['machine']} ({_fmt(r['risk'])})"
                         for r in ranking[:3])
        return AssistantAnswer(
            f"Highest failure risk right now: {lead}.", intent,
            {"ranking": ranking})

    if intent.kind in ("power", "metric"):
        if intent.machine is None:
            return AssistantAnswer(
                "Which machine do you mean? I know: "
                + ", ".join(CANONICAL_MACHINES) + ".",
                intent, {"machines": list(CANONICAL_MACHINES)})
        metric = intent.metric or "PowerLoad"
        row = backend.latest_metric(intent.machine, metric)
        if row.get("value") is None:
            return AssistantAnswer(
                f"{intent.machine} does not report {metric}.", intent, row)
        unit = METRIC_UNITS.get(metric, "")
        unit_sfx = f" {unit}" if unit else ""
        return AssistantAnswer(
            f"{metric} on {intent.machine} is currently "
            f"{_fmt(row['value'])}{unit_sfx} (tick {row['tick']}).",
            intent, row)

    if intent.kind == "anomaly":
        window = intent.window_s or DEFAULT_WINDOW_S
        alerts = backend.anomalies_in_window(window, intent.machine)
        scope = f" on {intent.machine}" if intent.machine else ""
        if not alerts:
            return AssistantAnswer(
                f"No anomalies detected{scope} in the last {window} seconds.",
                intent, {"window_s": window, "alerts": []})
        worst = max(alerts, key=lambda a: a["score"])
        return AssistantAnswer(
            f"{len(alerts)} anomalies{scope} in the last {window} seconds; "
            f"worst on {worst['machine']} ({worst['top_metric']}, score "
            f"{_fmt(worst['score'])}, {worst['severity']}).",
            intent, {"window_s": window, "alerts": alerts})

    if intent.kind == "forecast":
        horizon = intent.horizon_ticks or DEFAULT_FORECAST_TICKS
        fc = backend.forecast_power(horizon)
        values = fc.get("values_kw", [])
        if not values:
            return AssistantAnswer("No forecast is available yet.", intent, fc)
        peaks = sum(1 for f in fc.get("peak_flags", []) if f)
        peak_note = (f" {peaks} step(s) exceed the peak threshold."
                     if peaks else " No peaks expected.")
        return AssistantAnswer(
            f"Forecast for the next {len(values)} steps: "
            f"{_fmt(values[0])} to {_fmt(max(values))} kW.{peak_note}",
            intent, fc)

    if intent.kind == "maintenance":
        rows = backend.maintenance_plan(intent.machine)
        scope = f" for {intent.machine}" if intent.machine else ""
        if not rows:
            return AssistantAnswer(
                f"No maintenance tasks scheduled{scope}.", intent, {"tasks": []})
        head = rows[0]
        return AssistantAnswer(
            f"{len(rows)} maintenance task(s){scope}; next: {head['Task']} on "
            f"{head['MachineID']} ({head['Priority']}, {head['Scheduled Date']}).",
            intent, {"tasks": rows})

    return AssistantAnswer(
        "I can answer questions about machine metrics, power, anomalies, "
        "failure risk, maintenance plans, and energy forecasts.",
        intent, {})


# -- remote completion adapter ------------------------------------------------

@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    api_key: str | None = None
    timeout_s: float = REMOTE_TIMEOUT_S
    max_tokens: int = REMOTE_MAX_TOKENS

    @classmethod
    def from_env(cls, env: dict[str, str] | None = None) -> "RemoteConfig | None":
        env = os.environ if env is None else env
        endpoint = env.get(REMOTE_ENDPOINT_ENV, "").strip()
        if not endpoint:
            return None
        return cls(endpoint=endpoint,
                   api_key=env.get(REMOTE_API_KEY_ENV) or None)


def remote_complete(config: RemoteConfig, prompt: str,
                    opener: Callable | None = None) -> str:
    """POST the prompt to the configured endpoint, return its text.

    Raises RemoteAdapterError on any transport, status, or payload problem.
    The API key goes into the Authorization header and is never logged or
    echoed in error messages.
    """
    body = json.dumps({"prompt": prompt,
                       "max_tokens": config.max_tokens}).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    req = urllib.request.Request(config.endpoint, data=body, headers=headers,
                                 method="POST")
    open_fn = opener or urllib.request.urlopen
    try:
        with open_fn(req, timeout=config.timeout_s) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        raise RemoteAdapterError(f"remote endpoint returned {exc.code}") from exc
    except (urllib.error.URLError, OSError, TimeoutError) as exc:
        raise RemoteAdapterError("remote endpoint unreachable") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
        text = doc["text"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise RemoteAdapterError("remote endpoint sent a malformed reply") from exc
    if not isinstance(text, str) or not text.strip():
        raise RemoteAdapterError("remote endpoint sent an empty reply")
    return text.strip()


def _grounding_prompt(question: str, answer: AssistantAnswer) -> str:
    return (
        "Rephrase this factory telemetry answer for an operator. Use only "
        "the facts given; do not invent numbers.\n"
        f"Question: {question}\n"
        f"Facts: {json.dumps(answer.data, default=str)}\n"
        f"Draft answer: {answer.text}"
    )


def answer(question: str, backend: Backend,
           remote: RemoteConfig | None = None,
           opener: Callable | None = None) -> AssistantAnswer:
    """Parse, dispatch, and optionally restyle through the remote adapter.

    The data payload always comes from the backend dispatch; the remote can
    only reword the text. Any remote failure silently degrades to the rule
    wording (source stays "rule").
    """
    intent = parse_intent(question)
    base = dispatch(intent, backend)
    if remote is None:
        return base
    try:
        text = remote_complete(remote, _grounding_prompt(question, base),
                               opener=opener)
    except RemoteAdapterError:
        return base
    return AssistantAnswer(text=text, intent=base.intent, data=base.data,
                           source="remote")
