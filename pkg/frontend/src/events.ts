/**
 * Event feed plumbing: one server-sent-event subscription per mission,
 * reconnect with the last seen id, and a polling fallback that keeps
 * the phase display moving when the stream will not come up.
 *
 * Transports are injected so tests can script delivery order exactly.
 */

import { applyPolledPhase, applyStreamEvent, ConsoleState } from "./model.js";

export interface SourceHandle {
  close(): void;
}

export interface SourceHandlers {
  onEvent: (id: number, kind: string, dataText: string) => void;
  onError: () => void;
}

export type SourceFactory = (url: string, handlers: SourceHandlers) => SourceHandle;

export interface MonitorDeps {
  eventsUrl: (lastEventId: number) => string;
  openStream: SourceFactory;
  pollPhase: () => Promise<string>;
  onChange: () => void;
  onApplied: (kind: string, data: unknown) => void;
  onTerminal: (kind: "complete" | "error") => void;
}

const RETRY_START_MS = 500;
const RETRY_CAP_MS = 15000;
const POLL_MS = 1000;
const POLL_AFTER_FAILURES = 3;

export class MissionMonitor {
  private state: ConsoleState;
  private deps: MonitorDeps;
  private source: SourceHandle | null = null;
  private retryMs = RETRY_START_MS;
  private failures = 0;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private done = false;

  constructor(state: ConsoleState, deps: MonitorDeps) {
    this.state = state;
    this.deps = deps;
  }

  start(): void {
    this.connect();
  }

  stop(): void {
    this.done = true;
    if (this.source) this.source.close();
    this.source = null;
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    this.pollTimer = null;
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.retryTimer = null;
  }

  private connect(): void {
    if (this.done) return;
    const url = this.deps.eventsUrl(this.state.lastEventId);
    this.source = this.deps.openStream(url, {
      onEvent: (id, kind, dataText) => this.handleEvent(id, kind, dataText),
      onError: () => this.handleError(),
    });
  }

  private handleEvent(id: number, kind: string, dataText: string): void {
    if (this.done) return;
    let data: unknown = {};
    try {
      data = JSON.parse(dataText);
    } catch {
      return; // malformed frame, the next one will carry the state
    }
    if (!applyStreamEvent(this.state, id, kind, data)) return;
    // the stream is healthy again: polling can stand down
    this.failures = 0;
    this.retryMs = RETRY_START_MS;
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
      this.state.streamMode = "stream";
    }
    if (this.state.streamMode !== "stream") this.state.streamMode = "stream";
    this.deps.onApplied(kind, data);
    this.deps.onChange();
    if (kind === "complete" || kind === "error") {
      this.stop();
      this.deps.onTerminal(kind);
    }
  }

  private handleError(): void {
    if (this.done) return;
    if (this.source) this.source.close();
    this.source = null;
    this.failures += 1;
    if (this.failures >= POLL_AFTER_FAILURES && this.pollTimer === null) {
      this.state.streamMode = "poll";
      this.deps.onChange();
      this.pollTimer = setInterval(() => void this.pollOnce(), POLL_MS);
    }
    // keep trying the stream regardless; it resumes from the cursor
    this.retryTimer = setTimeout(() => this.connect(), this.retryMs);
    this.retryMs = Math.min(this.retryMs * 2, RETRY_CAP_MS);
  }

  private async pollOnce(): Promise<void> {
    if (this.done) return;
    let phase: string;
    try {
      phase = await this.deps.pollPhase();
    } catch {
      return;
    }
    if (this.done) return;
    if (applyPolledPhase(this.state, phase)) {
      this.deps.onApplied("poll", { phase });
      this.deps.onChange();
    }
    if (phase === "complete") {
      this.stop();
      this.deps.onTerminal("complete");
    }
  }
}

/** Wire a browser EventSource to the handler shape the monitor wants. */
export function browserSource(url: string, handlers: SourceHandlers): SourceHandle {
  const es = new EventSource(url);
  const forward = (kind: string) => (e: Event) => {
    const me = e as MessageEvent;
    if (typeof me.data !== "string") return;
    handlers.onEvent(Number(me.lastEventId || 0), kind, me.data);
  };
  es.addEventListener("transition", forward("transition"));
  es.addEventListener("complete", forward("complete"));
  // a server event named "error" carries data; transport errors do not
  es.addEventListener("error", (e) => {
    if (typeof (e as MessageEvent).data === "string") {
      forward("error")(e);
    } else if (es.readyState === EventSource.CLOSED) {
      handlers.onError();
    }
    // CONNECTING means the browser is retrying on its own; let it
  });
  return { close: () => es.close() };
}
