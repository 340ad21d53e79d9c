import { GatewayClient } from "./api.js";
import { AssistantChat } from "./assistant.js";
import { LineChart } from "./chart.js";
import type { ChartMarker, ChartPoint } from "./chart.js";
import { AlertFeed } from "./feed.js";
import { renderInsights } from "./insights.js";
import { renderSankey } from "./sankey.js";
import { ScenarioPanel } from "./scenario.js";
import { GatewayStream } from "./stream.js";
import type { EventSourceFactory, StreamStatus } from "./stream.js";
import type { Alert, Reading } from "./types.js";
import { num } from "./util.js";

const BUFFER_TICKS = 600;
const ALERT_WINDOW = 3600;
const PANEL_REFRESH_MS = 10_000;
const FLOW_WINDOW = 600;

export interface AppDeps {
  client: GatewayClient;
  streamFactory: EventSourceFactory;
}

/**
 * Wires the panels to the gateway: one fetch pass to seed every panel,
 * then the two event streams keep the chart and feed current while a slow
 * timer refreshes the derived panels. All state lives in gateway payloads;
 * the app only buffers and routes them.
 */
export class App {
  private readings = new Map<string, Reading[]>();
  private alertsByMachine = new Map<string, Alert[]>();
  private chart: LineChart;
  private forecastChart: LineChart;
  private feed: AlertFeed;
  private scenario: ScenarioPanel;
  private chat: AssistantChat;
  private stream: GatewayStream;
  private machineSelect: HTMLSelectElement;
  private metricSelect: HTMLSelectElement;
  private banner: HTMLElement;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private root: Document, private deps: AppDeps) {
    const byId = (id: string) => {
      const node = root.getElementById(id);
      if (!node) throw new Error(`dashboard shell is missing #${id}`);
      return node;
    };
    this.banner = byId("status-banner");
    this.machineSelect = byId("machine-select") as HTMLSelectElement;
    this.metricSelect = byId("metric-select") as HTMLSelectElement;
    this.chart = new LineChart(byId("live-chart"));
    this.forecastChart = new LineChart(byId("forecast-chart"));
    this.feed = new AlertFeed(byId("alert-feed"));
    this.scenario = new ScenarioPanel(byId("scenario-panel"), deps.client);
    this.chat = new AssistantChat(byId("chat-panel"), deps.client);
    this.stream = new GatewayStream("", {
      onReading: (r) => this.onReading(r),
      onAlert: (a) => this.onAlert(a),
      onStatus: (s) => this.onStatus(s),
    }, deps.streamFactory);

    this.machineSelect.addEventListener("change", () => void this.loadSelection());
    this.metricSelect.addEventListener("change", () => this.renderChart());
  }

  async init(): Promise<void> {
    const machines = await this.deps.client.machines();
    this.machineSelect.textContent = "";
    for (const m of machines.machines) {
      const opt = this.root.createElement("option");
      opt.value = m.slug;
      opt.textContent = m.id;
      opt.dataset.metrics = m.metrics.join(",");
      this.machineSelect.appendChild(opt);
    }
    await this.loadSelection();

    const alerts = await this.deps.client.alerts(ALERT_WINDOW);
    this.feed.setAll(alerts.alerts);
    for (const a of alerts.alerts) this.rememberAlert(a);
    this.renderChart();

    await this.refreshPanels();
    this.timer = setInterval(() => void this.refreshPanels(), PANEL_REFRESH_MS);
    this.stream.start();
  }

  stop(): void {
    this.stream.stop();
    if (this.timer !== null) clearInterval(this.timer);
  }

  private selectedMachine(): string {
    const opt = this.machineSelect.selectedOptions[0];
    return opt ? opt.textContent ?? "" : "";
  }

  private async loadSelection(): Promise<void> {
    const slug = this.machineSelect.value;
    if (!slug) return;
    const opt = this.machineSelect.selectedOptions[0];
    const metrics = (opt?.dataset.metrics ?? "").split(",").filter(Boolean);
    const current = this.metricSelect.value;
    this.metricSelect.textContent = "";
    for (const metric of metrics) {
      const mo = this.root.createElement("option");
      mo.value = metric;
      mo.textContent = metric;
      this.metricSelect.appendChild(mo);
    }
    if (metrics.includes(current)) this.metricSelect.value = current;

    const payload = await this.deps.client.readings(slug);
    const tail = payload.readings.slice(-BUFFER_TICKS);
    this.readings.set(payload.machine, tail);
    this.renderChart();
  }

  private onReading(reading: Reading): void {
    const buf = this.readings.get(reading.machine) ?? [];
    buf.push(reading);
    if (buf.length > BUFFER_TICKS) buf.splice(0, buf.length - BUFFER_TICKS);
    this.readings.set(reading.machine, buf);
    if (reading.machine === this.selectedMachine()) this.renderChart();
  }

  private rememberAlert(alert: Alert): void {
    const list = this.alertsByMachine.get(alert.machine) ?? [];
    list.push(alert);
    this.alertsByMachine.set(alert.machine, list);
  }

  private onAlert(alert: Alert): void {
    this.feed.push(alert);
    this.rememberAlert(alert);
    if (alert.machine === this.selectedMachine()) this.renderChart();
  }

  private onStatus(status: StreamStatus): void {
    if (status === "live") {
      this.banner.style.display = "none";
    } else {
      this.banner.style.display = "";
      this.banner.textContent =
        status === "connecting" ? "connecting…" : "connection lost, reconnecting…";
    }
  }

  renderChart(): void {
    const machine = this.selectedMachine();
    const metric = this.metricSelect.value;
    const buf = this.readings.get(machine) ?? [];
    const points: ChartPoint[] = buf
      .filter((r) => metric in r.values)
      .map((r) => ({ tick: r.tick, value: r.values[metric] }));
    const markers: ChartMarker[] = (this.alertsByMachine.get(machine) ?? []).map((a) => ({
      tick: a.tick,
      label: `${a.top_metric} score ${num(a.score)} (${a.severity})`,
    }));
    this.chart.render(points, markers);
  }

  private async refreshPanels(): Promise<void> {
    const { client } = this.deps;
    const [insights, flows, forecast] = await Promise.allSettled([
      client.insights(),
      client.flows(FLOW_WINDOW),
      client.forecast(),
    ]);
    if (insights.status === "fulfilled") {
      renderInsights(this.root.getElementById("insights-panel")!, insights.value);
    }
    if (flows.status === "fulfilled") {
      renderSankey(this.root.getElementById("sankey-panel")!, flows.value);
    }
    const note = this.root.getElementById("forecast-note")!;
    if (forecast.status === "fulfilled") {
      const fc = forecast.value;
      this.forecastChart.render(
        fc.ticks.map((t, i) => ({ tick: t, value: fc.values_kw[i] })),
        fc.ticks.filter((_, i) => fc.peak_flags[i]).map((t) => ({
          tick: t,
          label: `above peak threshold ${num(fc.peak_threshold_kw)} kW`,
        })),
      );
      note.textContent =
        `${fc.scope} power, ${fc.values_kw.length} steps from tick ${num(fc.start_tick)}; ` +
        `peak threshold ${num(fc.peak_threshold_kw)} kW`;
    } else {
      note.textContent = forecast.reason instanceof Error
        ? forecast.reason.message
        : "forecast unavailable";
    }
  }

  // test hooks
  get scenarioPanel(): ScenarioPanel {
    return this.scenario;
  }

  get chatPanel(): AssistantChat {
    return this.chat;
  }
}
