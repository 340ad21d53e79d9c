import type { FlowsPayload } from "./types.js";
import { num } from "./util.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 640;
const HEIGHT = 300;
const NODE_W = 14;
const GAP = 8;
const PAD = 40;

interface NodeBox {
  name: string;
  column: number;
  total: number;
  y0: number;
  y1: number;
  used: number; // running offset for edge attachment
}

function columnOf(name: string, sources: Set<string>, sinks: Set<string>): number {
  if (sources.has(name)) return 0;
  if (sinks.has(name)) return 2;
  return 1;
}

/**
 * Three-column energy flow: supply (Grid/Battery), machines, process
 * stages. Band thickness is proportional to kWh; the titles carry the
 * exact payload numbers.
 */
export function renderSankey(container: HTMLElement, payload: FlowsPayload): void {
  container.textContent = "";
  if (payload.edges.length === 0) {
    const p = document.createElement("p");
    p.className = "sankey-empty";
    p.textContent = "no energy flow in this window";
    container.appendChild(p);
    return;
  }

  const sources = new Set(payload.edges.map((e) => e.source));
  const targets = new Set(payload.edges.map((e) => e.target));
  const pureSources = new Set([...sources].filter((n) => !targets.has(n)));
  const pureSinks = new Set([...targets].filter((n) => !sources.has(n)));

  const totals = new Map<string, number>();
  for (const e of payload.edges) {
    const col = columnOf(e.source, pureSources, pureSinks);
    totals.set(e.source, (totals.get(e.source) ?? 0) + (col === 1 ? 0 : e.energy_kwh));
    totals.set(e.target, (totals.get(e.target) ?? 0) + e.energy_kwh);
  }
  // middle-column nodes count inflow only, so both halves sum to the same
  // plant total and the two edge fans line up.

  const columns: NodeBox[][] = [[], [], []];
  for (const [name, total] of totals) {
    const col = columnOf(name, pureSources, pureSinks);
    columns[col].push({ name, column: col, total, y0: 0, y1: 0, used: 0 });
  }
  for (const col of columns) col.sort((a, b) => b.total - a.total);

  const grand = Math.max(...columns.map((c) => c.reduce((s, n) => s + n.total, 0)));
  const usable = HEIGHT - 2 * PAD;
  for (const col of columns) {
    const gaps = GAP * Math.max(0, col.length - 1);
    const scale = grand > 0 ? (usable - gaps) / grand : 0;
    let cursor = PAD;
    for (const node of col) {
      node.y0 = cursor;
      node.y1 = cursor + Math.max(2, node.total * scale);
      cursor = node.y1 + GAP;
    }
  }

  const byName = new Map<string, NodeBox>();
  for (const col of columns) for (const n of col) byName.set(n.name, n);
  const colX = [PAD, WIDTH / 2 - NODE_W / 2, WIDTH - PAD - NODE_W];

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.setAttribute("class", "sankey");

  // edges first so node bars draw on top
  for (const e of payload.edges) {
    const a = byName.get(e.source);
    const b = byName.get(e.target);
    if (!a || !b) continue;
    const scaleA = (a.y1 - a.y0) / Math.max(a.total, 1e-12);
    const scaleB = (b.y1 - b.y0) / Math.max(b.total, 1e-12);
    const w = Math.max(1, e.energy_kwh * Math.min(scaleA, scaleB));
    const ya = a.y0 + a.used * scaleA;
    const yb = b.y0 + b.used * scaleB;
    a.used += e.energy_kwh;
    b.used += e.energy_kwh;
    const x1 = colX[a.column] + NODE_W;
    const x2 = colX[b.column];
    const mid = (x1 + x2) / 2;
    const path = document.createElementNS(SVG_NS, "path");
    path.setAttribute(
      "d",
      `M ${x1} ${ya + w / 2} C ${mid} ${ya + w / 2}, ${mid} ${yb + w / 2}, ${x2} ${yb + w / 2}`,
    );
    path.setAttribute("stroke-width", w.toFixed(2));
    path.setAttribute("class", "sankey-link");
    path.setAttribute("data-source", e.source);
    path.setAttribute("data-target", e.target);
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `${e.source} → ${e.target}: ${num(e.energy_kwh)} kWh`;
    path.appendChild(title);
    svg.appendChild(path);
  }

  for (const col of columns) {
    for (const node of col) {
      const rect = document.createElementNS(SVG_NS, "rect");
      rect.setAttribute("x", String(colX[node.column]));
      rect.setAttribute("y", node.y0.toFixed(2));
      rect.setAttribute("width", String(NODE_W));
      rect.setAttribute("height", (node.y1 - node.y0).toFixed(2));
      rect.setAttribute("class", "sankey-node");
      rect.setAttribute("data-node", node.name);
      const title = document.createElementNS(SVG_NS, "title");
      title.textContent = `${node.name}: ${num(node.total)} kWh`;
      rect.appendChild(title);
      svg.appendChild(rect);

      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("y", ((node.y0 + node.y1) / 2 + 4).toFixed(2));
      label.setAttribute("class", "sankey-label");
      if (node.column === 2) {
        label.setAttribute("x", String(colX[2] - 6));
        label.setAttribute("text-anchor", "end");
      } else {
        label.setAttribute("x", String(colX[node.column] + NODE_W + 6));
      }
      label.textContent = node.name;
      svg.appendChild(label);
    }
  }

  const total = document.createElement("p");
  total.className = "sankey-total";
  total.innerHTML = `plant total <strong data-role="total-kwh">${num(payload.total_kwh)}</strong> kWh over ${num(payload.window_ticks)} ticks`;
  container.appendChild(svg);
  container.appendChild(total);
}
