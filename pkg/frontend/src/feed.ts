import type { Alert } from "./types.js";
import { el, num } from "./util.js";

const MAX_ROWS = 50;

/** Alert feed, newest first, with an explicit empty state. */
export class AlertFeed {
  private list: HTMLUListElement;
  private empty: HTMLParagraphElement;

  constructor(container: HTMLElement) {
    this.empty = el("p", "feed-empty", "No anomalies detected.");
    this.list = document.createElement("ul");
    this.list.className = "feed-list";
    container.appendChild(this.empty);
    container.appendChild(this.list);
  }

  push(alert: Alert): void {
    this.empty.style.display = "none";
    const item = el("li", `feed-item severity-${alert.severity}`);
    item.dataset.tick = String(alert.tick);
    const when = new Date(alert.timestamp_ms).toISOString().slice(11, 19);
    item.innerHTML =
      `<span class="feed-when">${when}</span>` +
      `<strong>${alert.machine}</strong> ${alert.top_metric}` +
      ` score <span data-role="score">${num(alert.score)}</span>` +
      ` <span class="feed-sev">${alert.severity}</span>`;
    this.list.prepend(item);
    while (this.list.children.length > MAX_ROWS) {
      this.list.lastElementChild?.remove();
    }
  }

  setAll(alerts: Alert[]): void {
    this.list.textContent = "";
    this.empty.style.display = "";
    for (const a of alerts) this.push(a); // input oldest-first, ends newest-first
  }

  get size(): number {
    return this.list.children.length;
  }
}
