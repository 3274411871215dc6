import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { MissionMonitor, SourceHandlers } from "../src/events.js";
import { ConsoleState, initialState } from "../src/model.js";

/** Scriptable stream transport: each connect shifts the next script. */
class FakeStreams {
  urls: string[] = [];
  handlers: SourceHandlers[] = [];
  closed = 0;

  factory = (url: string, handlers: SourceHandlers) => {
    this.urls.push(url);
    this.handlers.push(handlers);
    return { close: () => void (this.closed += 1) };
  };

  emit(id: number, kind: string, data: unknown): void {
    this.handlers[this.handlers.length - 1]!.onEvent(id, kind, JSON.stringify(data));
  }

  fail(): void {
    this.handlers[this.handlers.length - 1]!.onError();
  }
}

const transition = (to: string) => ({ t: 1.0, from: "x", to });

let state: ConsoleState;
let streams: FakeStreams;
let phases: string[];
let terminal: string[];
let monitor: MissionMonitor;

function makeMonitor(): MissionMonitor {
  return new MissionMonitor(state, {
    eventsUrl: (last) => (last > 0 ? `/events?last_event_id=${last}` : "/events"),
    openStream: streams.factory,
    pollPhase: async () => phases.shift() ?? "execute",
    onChange: () => {},
    onApplied: () => {},
    onTerminal: (kind) => void terminal.push(kind),
  });
}

beforeEach(() => {
  vi.useFakeTimers();
  state = initialState();
  streams = new FakeStreams();
  phases = [];
  terminal = [];
  monitor = makeMonitor();
});

afterEach(() => {
  monitor.stop();
  vi.useRealTimers();
});

describe("mission monitor", () => {
  it("feeds events through and stops on the terminal one", () => {
    monitor.start();
    streams.emit(1, "transition", transition("plan_motion"));
    streams.emit(2, "transition", transition("spray"));
    streams.emit(3, "complete", { phase: "complete" });
    expect(state.feed.map((e) => e.id)).toEqual([1, 2, 3]);
    expect(state.phase).toBe("complete");
    expect(terminal).toEqual(["complete"]);
    expect(streams.closed).toBeGreaterThan(0);
  });

  it("reconnects from the cursor and drops the replay", async () => {
    monitor.start();
    streams.emit(1, "transition", transition("a"));
    streams.emit(2, "transition", transition("b"));
    streams.emit(3, "transition", transition("c"));
    streams.fail();
    await vi.advanceTimersByTimeAsync(600);
    expect(streams.urls).toEqual(["/events", "/events?last_event_id=3"]);
    // server replays the tail regardless; the feed must not duplicate
    streams.emit(3, "transition", transition("c"));
    streams.emit(4, "transition", transition("d"));
    streams.emit(5, "complete", { phase: "complete" });
    expect(state.feed.map((e) => e.id)).toEqual([1, 2, 3, 4, 5]);
  });

  it("ignores malformed frames", () => {
    monitor.start();
    streams.handlers[0]!.onEvent(1, "transition", "{not json");
    expect(state.feed.length).toBe(0);
    streams.emit(1, "transition", transition("a"));
    expect(state.feed.length).toBe(1);
  });

  it("falls back to polling after repeated failures, then recovers", async () => {
    phases = ["plan_motion", "execute"];
    monitor.start();
    streams.fail();
    await vi.advanceTimersByTimeAsync(500);
    streams.fail();
    await vi.advanceTimersByTimeAsync(1000);
    streams.fail(); // third strike arms the poller
    expect(state.streamMode).toBe("poll");
    await vi.advanceTimersByTimeAsync(1000);
    expect(state.phase).toBe("plan_motion");
    expect(state.feed.filter((e) => e.synthetic).length).toBe(1);
    await vi.advanceTimersByTimeAsync(1000);
    expect(state.phase).toBe("execute");
    // the stream comes back on its scheduled retry and takes over
    await vi.advanceTimersByTimeAsync(2000);
    streams.emit(1, "transition", transition("spray"));
    expect(state.streamMode).toBe("stream");
    expect(state.feed.filter((e) => e.synthetic).length).toBe(0);
    streams.emit(2, "complete", { phase: "complete" });
    expect(terminal).toEqual(["complete"]);
  });

  it("polling alone reaches the terminal state", async () => {
    phases = ["execute", "complete"];
    monitor.start();
    streams.fail();
    await vi.advanceTimersByTimeAsync(500);
    streams.fail();
    await vi.advanceTimersByTimeAsync(1000);
    streams.fail();
    await vi.advanceTimersByTimeAsync(2000);
    expect(state.phase).toBe("complete");
    expect(terminal).toEqual(["complete"]);
  });
});
