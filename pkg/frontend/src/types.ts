// Gateway payload shapes, mirrored 1:1 from the server's JSON schemas.
// The dashboard never derives numbers from these beyond chart geometry.

export interface MachineInfo {
  id: string;
  slug: string;
  metrics: string[];
  latest_tick: number | null;
}

export interface MachinesPayload {
  version: number;
  machines: MachineInfo[];
}

export interface Reading {
  machine: string;
  tick: number;
  timestamp_ms: number;
  values: Record<string, number>;
}

export interface ReadingsPayload {
  version: number;
  machine: string;
  from_tick: number;
  to_tick: number;
  readings: Reading[];
}

export interface Alert {
  machine: string;
  tick: number;
  timestamp_ms: number;
  score: number;
  severity: string;
  top_metric: string;
  deviations: Record<string, number>;
  category: string;
}

export interface AlertsPayload {
  version: number;
  window_ticks: number;
  alerts: Alert[];
}

export interface ForecastPayload {
  version: number;
  scope: string;
  start_tick: number;
  ticks: number[];
  values_kw: number[];
  peak_flags: boolean[];
  peak_threshold_kw: number;
}

export interface FlowEdge {
  source: string;
  target: string;
  energy_kwh: number;
}

export interface FlowsPayload {
  version: number;
  window_ticks: number;
  edges: FlowEdge[];
  total_kwh: number;
}

export interface InsightRow {
  task: string;
  priority: string;
  reason: string;
  machine: string;
  scheduled_ms: number;
  scheduled_date: string;
  risk: number;
}

export interface InsightsPayload {
  version: number;
  columns: string[];
  now_ms: number | null;
  insights: InsightRow[];
}

export interface ScenarioRequest {
  name?: string;
  line_speed: number;
  machine_speed: number;
  cooling: number;
}

export interface ScenarioOutcome {
  name: string;
  line_speed: number;
  machine_speed: number;
  cooling: number;
  throughput_units_h: number;
  energy_kw: number;
  defect_rate: number;
  efficiency: number;
  rank: number;
}

export interface ScenarioDeltas {
  throughput_units_h: number;
  energy_kw: number;
  defect_rate: number;
}

export interface ScenarioPayload {
  version: number;
  baseline: ScenarioDeltas;
  outcome: ScenarioOutcome;
  deltas: ScenarioDeltas;
}

export interface AnswerPayload {
  version: number;
  text: string;
  intent: string;
  machine: string | null;
  metric: string | null;
  data: Record<string, unknown>;
  source: string;
}

export interface ErrorPayload {
  code: number;
  message: string;
}
