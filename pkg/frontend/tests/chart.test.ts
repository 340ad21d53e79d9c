import { beforeEach, describe, expect, it } from "vitest";

import { LineChart } from "../src/chart.js";
import type { ChartPoint } from "../src/chart.js";

// geometry constants mirrored from chart.ts
const PAD_LEFT = 56;
const INNER_W = 640 - 56 - 12;

let container: HTMLElement;
let chart: LineChart;

beforeEach(() => {
  document.body.innerHTML = '<div id="c"></div>';
  container = document.getElementById("c")!;
  chart = new LineChart(container);
});

function wavyPoints(n: number, spikeTick?: number): ChartPoint[] {
  return Array.from({ length: n }, (_, i) => ({
    tick: i,
    value: spikeTick === i ? 90.123456 : 40 + (i % 7) * 0.25,
  }));
}

describe("LineChart", () => {
  it("puts the anomaly marker at the spike tick's x position", () => {
    chart.render(wavyPoints(100, 57), [{ tick: 57, label: "Temperature spike" }]);
    const marker = container.querySelector('[data-role="marker"]')!;
    expect(marker.getAttribute("data-tick")).toBe("57");
    const expectedX = PAD_LEFT + (57 / 99) * INNER_W;
    expect(Number(marker.getAttribute("cx"))).toBeCloseTo(expectedX, 2);
    // spike value is the series maximum, so the marker sits at the top edge
    expect(Number(marker.getAttribute("cy"))).toBeCloseTo(10, 2);
  });

  it("drops markers outside the plotted window", () => {
    chart.render(wavyPoints(50), [{ tick: 120, label: "later" }]);
    expect(container.querySelectorAll('[data-role="marker"]')).toHaveLength(0);
  });

  it("renders axis extremes verbatim", () => {
    chart.render(wavyPoints(100, 57), []);
    const labels = [...container.querySelectorAll(".chart-label")].map((n) => n.textContent);
    expect(labels).toContain("90.123456");
    expect(labels).toContain("40");
  });

  it("shows a waiting note with no data", () => {
    chart.render([], []);
    expect(container.textContent).toContain("waiting for data");
    expect(container.querySelector("svg")).toBeNull();
  });

  it("keeps one polyline as the series", () => {
    chart.render(wavyPoints(10), []);
    const series = container.querySelectorAll('[data-role="series"]');
    expect(series).toHaveLength(1);
    expect(series[0].getAttribute("points")!.split(" ")).toHaveLength(10);
  });
});
