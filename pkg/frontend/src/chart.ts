import { num } from "./util.js";

export interface ChartPoint {
  tick: number;
  value: number;
}

export interface ChartMarker {
  tick: number;
  label: string;
}

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 640;
const HEIGHT = 180;
const PAD = { left: 56, right: 12, top: 10, bottom: 22 };

function svgEl(tag: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

/**
 * One metric over time as an SVG polyline, with anomaly markers pinned to
 * their tick. All math here is pixel placement; the numbers shown (axis
 * extremes, marker tooltips) are gateway values verbatim.
 */
export class LineChart {
  constructor(private container: HTMLElement) {}

  render(points: ChartPoint[], markers: ChartMarker[]): void {
    this.container.textContent = "";
    if (points.length === 0) {
      const empty = document.createElement("p");
      empty.className = "chart-empty";
      empty.textContent = "waiting for data";
      this.container.appendChild(empty);
      return;
    }

    const ticks = points.map((p) => p.tick);
    const values = points.map((p) => p.value);
    const t0 = Math.min(...ticks);
    const t1 = Math.max(...ticks);
    let lo = Math.min(...values);
    let hi = Math.max(...values);
    if (lo === hi) {
      lo -= 1;
      hi += 1;
    }
    const innerW = WIDTH - PAD.left - PAD.right;
    const innerH = HEIGHT - PAD.top - PAD.bottom;
    const x = (tick: number) =>
      t1 === t0 ? PAD.left + innerW / 2 : PAD.left + ((tick - t0) / (t1 - t0)) * innerW;
    const y = (v: number) => PAD.top + (1 - (v - lo) / (hi - lo)) * innerH;

    const svg = svgEl("svg", {
      viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
      class: "line-chart",
      role: "img",
    });

    svg.appendChild(
      svgEl("line", {
        x1: String(PAD.left), y1: String(HEIGHT - PAD.bottom),
        x2: String(WIDTH - PAD.right), y2: String(HEIGHT - PAD.bottom),
        class: "chart-axis",
      }),
    );

    const loLabel = svgEl("text", {
      x: String(PAD.left - 6), y: String(y(lo)),
      class: "chart-label", "text-anchor": "end",
    });
    loLabel.textContent = num(lo);
    const hiLabel = svgEl("text", {
      x: String(PAD.left - 6), y: String(y(hi) + 10),
      class: "chart-label", "text-anchor": "end",
    });
    hiLabel.textContent = num(hi);
    svg.appendChild(loLabel);
    svg.appendChild(hiLabel);

    const path = points
      .map((p) => `${x(p.tick).toFixed(2)},${y(p.value).toFixed(2)}`)
      .join(" ");
    svg.appendChild(
      svgEl("polyline", { points: path, class: "chart-series", "data-role": "series" }),
    );

    const valueAt = new Map(points.map((p) => [p.tick, p.value]));
    for (const m of markers) {
      if (m.tick < t0 || m.tick > t1) continue;
      const v = valueAt.get(m.tick);
      const cy = v === undefined ? PAD.top + innerH / 2 : y(v);
      const dot = svgEl("circle", {
        cx: x(m.tick).toFixed(2),
        cy: cy.toFixed(2),
        r: "5",
        class: "chart-marker",
        "data-role": "marker",
        "data-tick": String(m.tick),
      });
      const title = document.createElementNS(SVG_NS, "title");
      title.textContent = m.label;
      dot.appendChild(title);
      svg.appendChild(dot);
    }

    this.container.appendChild(svg);
  }
}
