// Minimal copy of the ids the static shell provides; panels mount into
// these, so tests and index.html must stay in sync.
export function mountShell(): void {
  document.body.innerHTML = `
    <div id="status-banner"></div>
    <select id="machine-select"></select>
    <select id="metric-select"></select>
    <div id="live-chart"></div>
    <div id="alert-feed"></div>
    <div id="insights-panel"></div>
    <div id="sankey-panel"></div>
    <div id="forecast-chart"></div>
    <p id="forecast-note"></p>
    <div id="scenario-panel"></div>
    <div id="chat-panel"></div>
  `;
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function waitFor(
  predicate: () => boolean,
  deadlineMs = 2000,
  stepMs = 20,
): Promise<number> {
  const started = Date.now();
  while (Date.now() - started < deadlineMs) {
    if (predicate()) return Date.now() - started;
    await sleep(stepMs);
  }
  throw new Error(`condition not met within ${deadlineMs} ms`);
}
