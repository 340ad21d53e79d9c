import type { InsightsPayload } from "./types.js";

// Fixed column order; the table never reorders what maintenance planning
// decided.
export const INSIGHT_COLUMNS = [
  "Task",
  "Priority",
  "Reason",
  "MachineID",
  "Scheduled Date",
] as const;

export function renderInsights(container: HTMLElement, payload: InsightsPayload): void {
  container.textContent = "";
  if (payload.insights.length === 0) {
    const p = document.createElement("p");
    p.className = "insights-empty";
    p.textContent = "No maintenance actions suggested.";
    container.appendChild(p);
    return;
  }

  const table = document.createElement("table");
  table.className = "insights-table";
  const thead = document.createElement("thead");
  const headRow = document.createElement("tr");
  for (const col of INSIGHT_COLUMNS) {
    const th = document.createElement("th");
    th.textContent = col;
    headRow.appendChild(th);
  }
  thead.appendChild(headRow);
  table.appendChild(thead);

  const tbody = document.createElement("tbody");
  for (const row of payload.insights) {
    const tr = document.createElement("tr");
    tr.className = `priority-${row.priority.toLowerCase()}`;
    for (const cell of [row.task, row.priority, row.reason, row.machine, row.scheduled_date]) {
      const td = document.createElement("td");
      td.textContent = cell;
      tr.appendChild(td);
    }
    tbody.appendChild(tr);
  }
  table.appendChild(tbody);
  container.appendChild(table);
}
