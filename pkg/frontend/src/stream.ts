import type { Alert, Reading } from "./types.js";

// Minimal slice of the EventSource API so tests can inject a fake.
export interface EventSourceLike {
  addEventListener(type: string, listener: (ev: MessageEvent) => void): void;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export type StreamStatus = "connecting" | "live" | "reconnecting";

export interface StreamHandlers {
  onReading?: (reading: Reading) => void;
  onAlert?: (alert: Alert) => void;
  onStatus?: (status: StreamStatus) => void;
}

const RECONNECT_MS = 2000;

/**
 * One subscription per channel, auto-resubscribing on drop. The browser
 * EventSource retries transient errors itself; when it gives up (or the
 * fake closes), we rebuild the source after a short delay so the UI can
 * show a reconnect state in between.
 */
export class GatewayStream {
  private sources: EventSourceLike[] = [];
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private base: string,
    private handlers: StreamHandlers,
    private factory: EventSourceFactory,
  ) {}

  start(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    this.handlers.onStatus?.("connecting");
    const readings = this.factory(this.base + "/stream/readings");
    const alerts = this.factory(this.base + "/stream/alerts");
    this.sources = [readings, alerts];

    let opened = 0;
    const markLive = () => {
      opened += 1;
      if (opened === 2) this.handlers.onStatus?.("live");
    };
    readings.addEventListener("open", markLive);
    alerts.addEventListener("open", markLive);

    readings.addEventListener("reading", (ev) => {
      this.handlers.onReading?.(JSON.parse(ev.data) as Reading);
    });
    alerts.addEventListener("alert", (ev) => {
      this.handlers.onAlert?.(JSON.parse(ev.data) as Alert);
    });

    const onDrop = () => this.scheduleReconnect();
    readings.addEventListener("error", onDrop);
    alerts.addEventListener("error", onDrop);
  }

  private scheduleReconnect(): void {
    if (this.closed || this.timer !== null) return;
    this.handlers.onStatus?.("reconnecting");
    this.teardown();
    this.timer = setTimeout(() => {
      this.timer = null;
      if (!this.closed) this.open();
    }, RECONNECT_MS);
  }

  private teardown(): void {
    for (const s of this.sources) s.close();
    this.sources = [];
  }

  stop(): void {
    this.closed = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.teardown();
  }
}
