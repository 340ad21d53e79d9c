import type {
  AlertsPayload,
  AnswerPayload,
  FlowsPayload,
  ForecastPayload,
  InsightsPayload,
  MachinesPayload,
  ReadingsPayload,
  ScenarioPayload,
  ScenarioRequest,
} from "./types.js";

export class GatewayError extends Error {
  constructor(public code: number, message: string) {
    super(message);
    this.name = "GatewayError";
  }
}

async function toJson<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => null);
  if (!resp.ok) {
    const message =
      body && typeof body.message === "string"
        ? body.message
        : `gateway returned ${resp.status}`;
    throw new GatewayError(resp.status, message);
  }
  return body as T;
}

/** Thin typed client over the gateway routes. One method per route. */
export class GatewayClient {
  constructor(private base: string = "") {}

  private get<T>(path: string): Promise<T> {
    return fetch(this.base + path).then((r) => toJson<T>(r));
  }

  private post<T>(path: string, doc: unknown): Promise<T> {
    return fetch(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(doc),
    }).then((r) => toJson<T>(r));
  }

  machines(): Promise<MachinesPayload> {
    return this.get("/machines");
  }

  readings(slug: string, fromTick?: number, toTick?: number): Promise<ReadingsPayload> {
    const params = new URLSearchParams();
    if (fromTick !== undefined) params.set("from", String(fromTick));
    if (toTick !== undefined) params.set("to", String(toTick));
    const qs = params.toString();
    return this.get(`/machines/${slug}/readings${qs ? "?" + qs : ""}`);
  }

  alerts(windowTicks?: number): Promise<AlertsPayload> {
    const qs = windowTicks === undefined ? "" : `?window=${windowTicks}`;
    return this.get(`/alerts${qs}`);
  }

  insights(): Promise<InsightsPayload> {
    return this.get("/maintenance/insights");
  }

  forecast(horizon?: number): Promise<ForecastPayload> {
    const qs = horizon === undefined ? "" : `?horizon=${horizon}`;
    return this.get(`/energy/forecast${qs}`);
  }

  flows(windowTicks?: number): Promise<FlowsPayload> {
    const qs = windowTicks === undefined ? "" : `?window=${windowTicks}`;
    return this.get(`/energy/flows${qs}`);
  }

  scenario(req: ScenarioRequest): Promise<ScenarioPayload> {
    return this.post("/scenario/simulate", req);
  }

  ask(q: string): Promise<AnswerPayload> {
    return this.post("/assistant/query", { q });
  }
}
