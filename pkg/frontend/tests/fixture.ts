// In-process gateway stand-in: real HTTP server, canned payloads shaped
// exactly like the production routes, per-route hit counters.
import { createServer, type Server } from "node:http";
import type { AddressInfo } from "node:net";

export const SPIKE_TICK = 57;
export const LAST_TICK = 99;

const METRICS = [
  "Temperature",
  "VibrationLevel",
  "MachineLoad",
  "PowerLoad",
  "GridUsage",
];

function reading(machine: string, tick: number) {
  const spike = machine === "Coating Machine" && tick === SPIKE_TICK;
  return {
    machine,
    tick,
    timestamp_ms: 1704067200000 + tick * 1000,
    values: {
      Temperature: spike ? 90.123456 : 40 + (tick % 7) * 0.25,
      VibrationLevel: 1.2 + (tick % 5) * 0.01,
      MachineLoad: 0.62,
      PowerLoad: 44.5 + (tick % 3) * 0.2,
      GridUsage: 30.25,
    },
  };
}

export function spikeAlert() {
  return {
    machine: "Coating Machine",
    tick: SPIKE_TICK,
    timestamp_ms: 1704067200000 + SPIKE_TICK * 1000,
    score: 0.9123456,
    severity: "critical",
    top_metric: "Temperature",
    deviations: { Temperature: 6.21 },
    category: "machine",
  };
}

export const FIXTURE = {
  machines: {
    version: 1,
    machines: [
      { id: "Coating Machine", slug: "coating-machine", metrics: METRICS, latest_tick: LAST_TICK },
      { id: "AGV", slug: "agv", metrics: METRICS, latest_tick: LAST_TICK },
    ],
  },
  insights: {
    version: 1,
    columns: ["Task", "Priority", "Reason", "MachineID", "Scheduled Date"],
    now_ms: 1704067300000,
    insights: [
      {
        task: "Inspect and service Coating Machine",
        priority: "High",
        reason: "sustained temperature deviation",
        machine: "Coating Machine",
        scheduled_ms: 1704153600000,
        scheduled_date: "2024-01-02 00:00:00",
        risk: 0.81,
      },
      {
        task: "Schedule preventive check for AGV",
        priority: "Medium",
        reason: "vibration trending up",
        machine: "AGV",
        scheduled_ms: 1704240000000,
        scheduled_date: "2024-01-03 00:00:00",
        risk: 0.42,
      },
    ],
  },
  forecast: {
    version: 1,
    scope: "plant",
    start_tick: 100,
    ticks: Array.from({ length: 12 }, (_, i) => 100 + i),
    values_kw: [281.5, 282.1, 280.9, 283.4, 284.2, 286.1, 285.9, 284.0, 282.2, 281.0, 280.4, 279.9],
    peak_flags: [false, false, false, false, false, true, true, false, false, false, false, false],
    peak_threshold_kw: 285.5,
  },
  flows: {
    version: 1,
    window_ticks: 600,
    edges: [
      { source: "Grid", target: "Coating Machine", energy_kwh: 2.5 },
      { source: "Battery", target: "Coating Machine", energy_kwh: 0.5 },
      { source: "Coating Machine", target: "Electrode Preparation", energy_kwh: 3.0 },
      { source: "Grid", target: "AGV", energy_kwh: 1.1999999997 },
      { source: "AGV", target: "Logistics", energy_kwh: 1.1999999997 },
    ],
    total_kwh: 4.1999999997,
  },
  scenarioDeltas: {
    throughput_units_h: 4.0816659995,
    energy_kw: 7.3456789,
    defect_rate: -0.0012345,
  },
  rankingAnswer: {
    version: 1,
    text: "Highest failure risk right now: Coating Machine (0.81), AGV (0.42).",
    intent: "failure_ranking",
    machine: null,
    metric: null,
    data: {
      ranking: [
        { machine: "Coating Machine", risk: 0.81 },
        { machine: "AGV", risk: 0.42 },
      ],
    },
    source: "rule",
  },
  helpAnswer: {
    version: 1,
    text: "I can report metrics, anomalies, failure risk, forecasts, and maintenance plans.",
    intent: "help",
    machine: null,
    metric: null,
    data: {},
    source: "rule",
  },
};

export class FixtureGateway {
  private server: Server;
  base = "";
  hits = new Map<string, number>();
  scenarioBodies: unknown[] = [];
  failScenario = false;

  private constructor(server: Server) {
    this.server = server;
  }

  static async start(): Promise<FixtureGateway> {
    let fixture: FixtureGateway;
    const server = createServer((req, res) => {
      const url = new URL(req.url ?? "/", "http://localhost");
      const path = url.pathname.replace(/\/$/, "") || "/";
      fixture.hits.set(path, (fixture.hits.get(path) ?? 0) + 1);

      const send = (status: number, doc: unknown) => {
        const body = JSON.stringify(doc);
        res.writeHead(status, { "Content-Type": "application/json" });
        res.end(body);
      };

      if (req.method === "GET") {
        if (path === "/machines") return send(200, FIXTURE.machines);
        const m = path.match(/^\/machines\/([^/]+)\/readings$/);
        if (m) {
          const entry = FIXTURE.machines.machines.find((x) => x.slug === m[1]);
          if (!entry) return send(404, { code: 404, message: `unknown machine: ${m[1]}` });
          const rows = Array.from({ length: LAST_TICK + 1 }, (_, t) => reading(entry.id, t));
          return send(200, {
            version: 1, machine: entry.id, from_tick: 0, to_tick: LAST_TICK, readings: rows,
          });
        }
        if (path === "/alerts")
          return send(200, { version: 1, window_ticks: 3600, alerts: [] });
        if (path === "/maintenance/insights") return send(200, FIXTURE.insights);
        if (path === "/energy/forecast") return send(200, FIXTURE.forecast);
        if (path === "/energy/flows") return send(200, FIXTURE.flows);
        return send(404, { code: 404, message: `no route for GET ${path}` });
      }

      let raw = "";
      req.on("data", (chunk) => (raw += chunk));
      req.on("end", () => {
        const body = raw ? JSON.parse(raw) : {};
        if (path === "/scenario/simulate") {
          fixture.scenarioBodies.push(body);
          if (fixture.failScenario)
            return send(400, { code: 400, message: "scenario backend unavailable" });
          const nominal =
            body.line_speed === 1 && body.machine_speed === 1 && body.cooling === 1;
          const deltas = nominal
            ? { throughput_units_h: 0, energy_kw: 0, defect_rate: 0 }
            : FIXTURE.scenarioDeltas;
          return send(200, {
            version: 1,
            baseline: { throughput_units_h: 62.5, energy_kw: 222.75, defect_rate: 0.02 },
            outcome: {
              name: "what-if",
              line_speed: body.line_speed,
              machine_speed: body.machine_speed,
              cooling: body.cooling,
              throughput_units_h: 62.5 + deltas.throughput_units_h,
              energy_kw: 222.75 + deltas.energy_kw,
              defect_rate: 0.02 + deltas.defect_rate,
              efficiency: 0.2901234,
              rank: 0,
            },
            deltas,
          });
        }
        if (path === "/assistant/query") {
          const q = String(body.q ?? "").toLowerCase();
          return send(200, q.includes("fail") ? FIXTURE.rankingAnswer : FIXTURE.helpAnswer);
        }
        return send(404, { code: 404, message: `no route for POST ${path}` });
      });
    });

    fixture = new FixtureGateway(server);
    await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
    const addr = server.address() as AddressInfo;
    fixture.base = `http://127.0.0.1:${addr.port}`;
    return fixture;
  }

  hitCount(path: string): number {
    return this.hits.get(path) ?? 0;
  }

  async stop(): Promise<void> {
    await new Promise<void>((resolve, reject) =>
      this.server.close((err) => (err ? reject(err) : resolve())),
    );
  }
}
