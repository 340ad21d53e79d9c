import { afterAll, afterEach, beforeAll, beforeEach, describe, expect, it } from "vitest";

import { GatewayClient } from "../src/api.js";
import { App } from "../src/app.js";
import { INSIGHT_COLUMNS } from "../src/insights.js";
import { FakeEventSource } from "./fakes.js";
import { FIXTURE, FixtureGateway, SPIKE_TICK, spikeAlert } from "./fixture.js";
import { mountShell, sleep } from "./shell.js";

function q<T extends Element>(selector: string): T {
  const node = document.querySelector(selector);
  if (!node) throw new Error(`missing ${selector}`);
  return node as T;
}

function seriesPoints(panelId: string): string[] {
  const attr = q<SVGPolylineElement>(`#${panelId} polyline`).getAttribute("points") ?? "";
  return attr.split(" ").filter(Boolean);
}

describe("App against the fixture gateway", () => {
  let fx: FixtureGateway;
  let app: App;

  beforeAll(async () => {
    fx = await FixtureGateway.start();
  });

  afterAll(async () => {
    await fx.stop();
  });

  beforeEach(async () => {
    FakeEventSource.reset();
    mountShell();
    app = new App(document, {
      client: new GatewayClient(fx.base),
      streamFactory: FakeEventSource.factory(),
    });
    await app.init();
  });

  afterEach(() => {
    app.stop();
  });

  it("seeds every panel from the gateway on boot", () => {
    const options = [...document.querySelectorAll("#machine-select option")];
    expect(options.map((o) => o.textContent)).toEqual(["Coating Machine", "AGV"]);
    const metrics = [...document.querySelectorAll("#metric-select option")];
    expect(metrics).toHaveLength(5);
    expect(metrics[0].textContent).toBe("Temperature");

    expect(seriesPoints("live-chart")).toHaveLength(100);
    expect(q("#alert-feed .feed-empty").textContent).toBe("No anomalies detected.");

    const headers = [...document.querySelectorAll("#insights-panel th")];
    expect(headers.map((h) => h.textContent)).toEqual([...INSIGHT_COLUMNS]);

    expect(q('#sankey-panel [data-role="total-kwh"]').textContent).toBe("4.1999999997");

    const note = q("#forecast-note").textContent ?? "";
    expect(note).toBe("plant power, 12 steps from tick 100; peak threshold 285.5 kW");
    const peaks = [...document.querySelectorAll('#forecast-chart [data-role="marker"]')];
    expect(peaks.map((p) => p.getAttribute("data-tick"))).toEqual(["105", "106"]);

    const banner = q<HTMLElement>("#status-banner");
    expect(banner.style.display).not.toBe("none");
    expect(banner.textContent).toBe("connecting…");
  });

  it("hides the banner once both streams open and appends streamed readings", () => {
    FakeEventSource.openAll();
    expect(q<HTMLElement>("#status-banner").style.display).toBe("none");

    const before = seriesPoints("live-chart");
    FakeEventSource.byUrl("/stream/readings")[0].emit("reading", {
      machine: "Coating Machine",
      tick: 100,
      timestamp_ms: 1704067300000,
      values: { Temperature: 41.75, VibrationLevel: 1.21, MachineLoad: 0.62,
                PowerLoad: 44.9, GridUsage: 30.25 },
    });
    const after = seriesPoints("live-chart");
    expect(after).toHaveLength(before.length + 1);

    FakeEventSource.byUrl("/stream/readings")[0].emit("reading", {
      machine: "AGV",
      tick: 100,
      timestamp_ms: 1704067300000,
      values: { Temperature: 22.0 },
    });
    expect(seriesPoints("live-chart")).toHaveLength(after.length);
  });

  it("pins a streamed alert to its tick on the chart and logs it verbatim", () => {
    FakeEventSource.openAll();
    FakeEventSource.byUrl("/stream/alerts")[0].emit("alert", spikeAlert());

    const marker = q(`#live-chart [data-role="marker"]`);
    expect(marker.getAttribute("data-tick")).toBe(String(SPIKE_TICK));
    expect(marker.querySelector("title")?.textContent).toBe(
      "Temperature score 0.9123456 (critical)",
    );

    const row = q<HTMLElement>("#alert-feed li.feed-item");
    expect(row.dataset.tick).toBe(String(SPIKE_TICK));
    expect(row.querySelector('[data-role="score"]')?.textContent).toBe("0.9123456");
    expect(q<HTMLElement>("#alert-feed .feed-empty").style.display).toBe("none");
  });

  it("redraws the chart from the buffer when the metric changes", () => {
    const before = q(`#live-chart polyline`).getAttribute("points");
    const metricSelect = q<HTMLSelectElement>("#metric-select");
    metricSelect.value = "VibrationLevel";
    metricSelect.dispatchEvent(new Event("change"));
    const after = q(`#live-chart polyline`).getAttribute("points");
    expect(after).not.toBe(before);
    expect(after?.split(" ")).toHaveLength(100);
  });

  it("announces a dropped stream and resubscribes on its own", async () => {
    FakeEventSource.openAll();
    expect(FakeEventSource.instances).toHaveLength(2);

    FakeEventSource.byUrl("/stream/readings")[0].emit("error");
    const banner = q<HTMLElement>("#status-banner");
    expect(banner.style.display).not.toBe("none");
    expect(banner.textContent).toBe("connection lost, reconnecting…");

    await sleep(2100);
    expect(FakeEventSource.instances).toHaveLength(4);
    FakeEventSource.openAll();
    expect(banner.style.display).toBe("none");
  }, 8000);

  it("keeps insight rows in payload order", () => {
    const rows = [...document.querySelectorAll("#insights-panel tbody tr")];
    expect(rows).toHaveLength(FIXTURE.insights.insights.length);
    const cells = [...rows[1].querySelectorAll("td")].map((td) => td.textContent);
    expect(cells).toEqual([
      "Schedule preventive check for AGV",
      "Medium",
      "vibration trending up",
      "AGV",
      "2024-01-03 00:00:00",
    ]);
  });
});
