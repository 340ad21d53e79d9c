import { beforeEach, describe, expect, it } from "vitest";

import { INSIGHT_COLUMNS, renderInsights } from "../src/insights.js";
import { FIXTURE } from "./fixture.js";
import { mountShell } from "./shell.js";

let host: HTMLElement;

beforeEach(() => {
  mountShell();
  host = document.getElementById("insights-panel") as HTMLElement;
});

describe("renderInsights", () => {
  it("keeps the column order the service declares", () => {
    renderInsights(host, FIXTURE.insights);
    const headers = [...host.querySelectorAll("th")].map((th) => th.textContent);
    expect(headers).toEqual([...INSIGHT_COLUMNS]);
    expect(headers).toEqual(FIXTURE.insights.columns);
  });

  it("fills rows from the payload fields in column order", () => {
    renderInsights(host, FIXTURE.insights);
    const rows = host.querySelectorAll("tbody tr");
    expect(rows).toHaveLength(2);
    const first = [...rows[0].querySelectorAll("td")].map((td) => td.textContent);
    expect(first).toEqual([
      "Inspect and service Coating Machine",
      "High",
      "sustained temperature deviation",
      "Coating Machine",
      "2024-01-02 00:00:00",
    ]);
    expect(rows[0].className).toContain("priority-high");
  });

  it("shows a quiet message when there is nothing to do", () => {
    renderInsights(host, { ...FIXTURE.insights, insights: [] });
    expect(host.textContent).toContain("No maintenance actions suggested.");
    expect(host.querySelector("table")).toBeNull();
  });
});
