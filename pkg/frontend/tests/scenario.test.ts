import { afterEach, describe, expect, it, vi } from "vitest";

import { DEBOUNCE_MS, ScenarioPanel } from "../src/scenario.js";
import { GatewayClient } from "../src/api.js";
import type { ScenarioDeltas, ScenarioPayload } from "../src/types.js";
import { FIXTURE, FixtureGateway } from "./fixture.js";
import { mountShell, waitFor } from "./shell.js";

function payloadWith(deltas: ScenarioDeltas): ScenarioPayload {
  return {
    version: 1,
    baseline: { throughput_units_h: 62.5, energy_kw: 222.75, defect_rate: 0.02 },
    outcome: {
      name: "what-if",
      line_speed: 1,
      machine_speed: 1,
      cooling: 1,
      throughput_units_h: 62.5,
      energy_kw: 222.75,
      defect_rate: 0.02,
      efficiency: 0.2901234,
      rank: 0,
    },
    deltas,
  };
}

const ZERO: ScenarioDeltas = { throughput_units_h: 0, energy_kw: 0, defect_rate: 0 };

function mountPanel(client: { scenario: (req: unknown) => Promise<ScenarioPayload> }) {
  mountShell();
  const host = document.getElementById("scenario-panel") as HTMLElement;
  const panel = new ScenarioPanel(host, client as never);
  return { host, panel };
}

function deltaCell(host: HTMLElement, key: string): HTMLElement {
  return host.querySelector(`[data-delta="${key}"]`) as HTMLElement;
}

afterEach(() => {
  vi.useRealTimers();
});

describe("ScenarioPanel", () => {
  it("coalesces a rapid drag into one gateway call per debounce window", () => {
    vi.useFakeTimers();
    const scenario = vi.fn(async () => payloadWith(ZERO));
    const { panel } = mountPanel({ scenario });

    for (let i = 1; i <= 10; i += 1) {
      panel.setSlider("line_speed", 1 + i * 0.01);
      vi.advanceTimersByTime(20);
    }
    expect(scenario).not.toHaveBeenCalled();
    vi.advanceTimersByTime(DEBOUNCE_MS);
    expect(scenario).toHaveBeenCalledTimes(1);

    panel.setSlider("cooling", 0.9);
    vi.advanceTimersByTime(DEBOUNCE_MS);
    expect(scenario).toHaveBeenCalledTimes(2);
    expect(scenario).toHaveBeenLastCalledWith({
      line_speed: 1.1,
      machine_speed: 1,
      cooling: 0.9,
    });
  });

  it("keeps the nominal point at zero deltas", async () => {
    const { host, panel } = mountPanel({ scenario: async () => payloadWith(ZERO) });
    await panel.run();
    for (const key of ["throughput_units_h", "energy_kw", "defect_rate"]) {
      const cell = deltaCell(host, key);
      expect(cell.textContent).toBe("0");
      expect(cell.className).toBe("delta-zero");
    }
  });

  it("prints server deltas digit for digit, signed and colored", async () => {
    const { host, panel } = mountPanel({
      scenario: async () => payloadWith(FIXTURE.scenarioDeltas),
    });
    await panel.run();
    const up = deltaCell(host, "energy_kw");
    expect(up.textContent).toBe("+7.3456789");
    expect(up.className).toBe("delta-up");
    const down = deltaCell(host, "defect_rate");
    expect(down.textContent).toBe("-0.0012345");
    expect(down.className).toBe("delta-down");
    expect(deltaCell(host, "throughput_units_h").textContent).toBe("+4.0816659995");
  });

  it("round-trips a slider move through the gateway inside two seconds", async () => {
    const fx = await FixtureGateway.start();
    try {
      const { host, panel } = mountPanel(new GatewayClient(fx.base));
      panel.setSlider("line_speed", 1.1);
      const elapsed = await waitFor(
        () => deltaCell(host, "energy_kw").textContent !== "0",
      );
      expect(elapsed).toBeLessThan(2000);
      expect(deltaCell(host, "energy_kw").textContent).toBe("+7.3456789");
      expect(fx.scenarioBodies.at(-1)).toEqual({
        line_speed: 1.1,
        machine_speed: 1,
        cooling: 1,
      });
    } finally {
      await fx.stop();
    }
  });

  it("shows gateway errors inline and keeps the sliders usable", async () => {
    const fx = await FixtureGateway.start();
    try {
      const { host, panel } = mountPanel(new GatewayClient(fx.base));
      fx.failScenario = true;
      panel.setSlider("machine_speed", 1.3);
      await waitFor(() => {
        const box = host.querySelector(".scenario-error") as HTMLElement;
        return box.style.display !== "none" && box.textContent !== "";
      });
      const box = host.querySelector(".scenario-error") as HTMLElement;
      expect(box.textContent).toBe("scenario backend unavailable");

      const input = host.querySelector('input[data-key="machine_speed"]') as HTMLInputElement;
      expect(input.disabled).toBe(false);

      fx.failScenario = false;
      panel.setSlider("machine_speed", 1.2);
      await waitFor(() => box.style.display === "none");
      expect(deltaCell(host, "defect_rate").textContent).toBe("-0.0012345");
    } finally {
      await fx.stop();
    }
  });
});
