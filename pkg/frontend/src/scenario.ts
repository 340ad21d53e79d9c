import type { GatewayClient } from "./api.js";

export type ScenarioApi = Pick<GatewayClient, "scenario">;
import type { ScenarioPayload } from "./types.js";
import { debounce, el, num, signed } from "./util.js";

export const DEBOUNCE_MS = 250;

const SLIDERS = [
  { key: "line_speed", label: "Line speed" },
  { key: "machine_speed", label: "Machine speed" },
  { key: "cooling", label: "Cooling" },
] as const;

const DELTAS = [
  { key: "throughput_units_h", label: "Throughput", unit: "units/h" },
  { key: "energy_kw", label: "Energy", unit: "kW" },
  { key: "defect_rate", label: "Defect rate", unit: "" },
] as const;

/**
 * What-if sliders. Dragging fires at most one gateway call per debounce
 * window; the response deltas are printed exactly as the server sent
 * them, signed and colored. Errors surface inline and never lock the
 * sliders.
 */
export class ScenarioPanel {
  private inputs = new Map<string, HTMLInputElement>();
  private readouts = new Map<string, HTMLElement>();
  private deltaCells = new Map<string, HTMLElement>();
  private errorBox: HTMLElement;
  private requestSeq = 0;

  constructor(container: HTMLElement, private client: ScenarioApi) {
    const form = el("div", "scenario-form");
    for (const s of SLIDERS) {
      const row = el("label", "scenario-row");
      row.appendChild(el("span", "scenario-name", s.label));
      const input = document.createElement("input");
      input.type = "range";
      input.min = "0.5";
      input.max = "1.5";
      input.step = "0.01";
      input.value = "1";
      input.dataset.key = s.key;
      const readout = el("span", "scenario-value", "1.00");
      input.addEventListener("input", () => {
        readout.textContent = Number(input.value).toFixed(2);
        this.queueRun();
      });
      this.inputs.set(s.key, input);
      this.readouts.set(s.key, readout);
      row.appendChild(input);
      row.appendChild(readout);
      form.appendChild(row);
    }
    container.appendChild(form);

    const deltas = el("dl", "scenario-deltas");
    for (const d of DELTAS) {
      const dt = el("dt", undefined, d.unit ? `${d.label} (${d.unit})` : d.label);
      const dd = el("dd", "delta-zero", "0");
      dd.dataset.delta = d.key;
      this.deltaCells.set(d.key, dd);
      deltas.appendChild(dt);
      deltas.appendChild(dd);
    }
    container.appendChild(deltas);

    this.errorBox = el("p", "scenario-error");
    this.errorBox.style.display = "none";
    container.appendChild(this.errorBox);
  }

  private queueRun = debounce(() => void this.run(), DEBOUNCE_MS);

  values(): { line_speed: number; machine_speed: number; cooling: number } {
    return {
      line_speed: Number(this.inputs.get("line_speed")!.value),
      machine_speed: Number(this.inputs.get("machine_speed")!.value),
      cooling: Number(this.inputs.get("cooling")!.value),
    };
  }

  async run(): Promise<void> {
    const seq = ++this.requestSeq;
    try {
      const payload = await this.client.scenario(this.values());
      if (seq !== this.requestSeq) return; // a newer drag superseded this
      this.renderDeltas(payload);
      this.errorBox.style.display = "none";
    } catch (err) {
      if (seq !== this.requestSeq) return;
      this.errorBox.textContent =
        err instanceof Error ? err.message : "scenario request failed";
      this.errorBox.style.display = "";
    }
  }

  private renderDeltas(payload: ScenarioPayload): void {
    for (const d of DELTAS) {
      const cell = this.deltaCells.get(d.key)!;
      const value = payload.deltas[d.key];
      cell.textContent = signed(value);
      cell.className =
        value > 0 ? "delta-up" : value < 0 ? "delta-down" : "delta-zero";
    }
    const note = payload.outcome;
    this.errorBox.title = `efficiency ${num(note.efficiency)}`;
  }

  /** Simulate a drag for tests and programmatic presets. */
  setSlider(key: string, value: number): void {
    const input = this.inputs.get(key);
    if (!input) return;
    input.value = String(value);
    input.dispatchEvent(new Event("input"));
  }
}
