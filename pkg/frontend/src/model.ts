/**
 * Console state and the transitions that update it.
 *
 * Everything here is a plain function over a plain object so the whole
 * review/monitor flow is testable without a DOM. The invariant the
 * module enforces: every field is copied from an API response. The
 * only arithmetic is unit conversion for display (quaternion to a
 * pointing direction); no coverage, dose, or timing result is ever
 * computed on this side.
 */

import { FeedEntry, SessionSummary, TargetRow, TargetsPayload, TraceEvent } from "./types.js";
import { extractReportDisplay, ReportDisplay } from "./report.js";

export type StreamMode = "idle" | "stream" | "poll";

export interface ToastMsg {
  id: number;
  text: string;
}

export interface ReportView {
  text: string;
  display: ReportDisplay;
}

export interface ConsoleState {
  session: SessionSummary | null;
  phase: string;
  targets: TargetRow[];
  pendingReview: Set<number>; // review calls in flight, keyed by cluster id
  reviewSubmitted: boolean;
  missionStarted: boolean;
  feed: FeedEntry[];
  lastEventId: number;
  streamMode: StreamMode;
  clockS: number | null; // mission clock, from the latest event payload
  report: ReportView | null;
  toasts: ToastMsg[];
  toastSeq: number;
}

export function initialState(): ConsoleState {
  return {
    session: null,
    phase: "idle",
    targets: [],
    pendingReview: new Set(),
    reviewSubmitted: false,
    missionStarted: false,
    feed: [],
    lastEventId: 0,
    streamMode: "idle",
    clockS: null,
    report: null,
    toasts: [],
    toastSeq: 0,
  };
}

export function applySession(state: ConsoleState, summary: SessionSummary): void {
  state.session = summary;
  state.phase = summary.phase;
}

export function applyTargets(state: ConsoleState, payload: TargetsPayload): void {
  state.phase = payload.phase;
  // copy: review acks replace rows, and the payload belongs to the caller
  state.targets = payload.targets.slice();
}

export function applyReviewAck(state: ConsoleState, row: TargetRow): void {
  const i = state.targets.findIndex((t) => t.cluster_id === row.cluster_id);
  if (i >= 0) state.targets[i] = row;
}

/** Rows the operator can still act on. Auto-rejected rows are closed. */
export function isReviewable(row: TargetRow): boolean {
  return row.state === "pending_review" || row.state === "approved" || row.state === "rejected";
}

/**
 * The approve flag a click on this row should send, or null when no
 * request must go out (not reviewable, or one is already in flight).
 * Unreviewed rows default to approved when review closes, so the first
 * click rejects; after that the click flips the recorded decision.
 */
export function reviewIntent(state: ConsoleState, clusterId: number): boolean | null {
  if (state.missionStarted || state.pendingReview.has(clusterId)) return null;
  const row = state.targets.find((t) => t.cluster_id === clusterId);
  if (!row || !isReviewable(row)) return null;
  return row.state === "rejected";
}

export function beginReview(state: ConsoleState, clusterId: number): void {
  state.pendingReview.add(clusterId);
}

export function endReview(state: ConsoleState, clusterId: number): void {
  state.pendingReview.delete(clusterId);
}

/** Rows that will run if review closed now (unreviewed ones count). */
export function effectiveApproved(state: ConsoleState): TargetRow[] {
  return state.targets.filter((t) => t.state === "approved" || t.state === "pending_review");
}

export function canSubmitReview(state: ConsoleState): boolean {
  return state.phase === "operator_review" && !state.reviewSubmitted && !state.missionStarted;
}

export function canStart(state: ConsoleState): boolean {
  return state.reviewSubmitted && !state.missionStarted && state.phase === "operator_review";
}

/** True when starting now would run an empty mission. */
export function needsEmptyConfirm(state: ConsoleState): boolean {
  return effectiveApproved(state).length === 0;
}

function describe(ev: TraceEvent): string {
  const at = `t=${ev.t.toFixed(1)}s`;
  const who = ev.cluster_id !== undefined ? ` [cluster ${ev.cluster_id}]` : "";
  return `${at} ${ev.from} → ${ev.to}${who}`;
}

/**
 * Fold one server-sent event into the feed. Returns false for events
 * at or behind the cursor (replays after a reconnect) so they are
 * dropped instead of duplicated.
 */
export function applyStreamEvent(
  state: ConsoleState,
  id: number,
  kind: string,
  data: unknown,
): boolean {
  if (id <= state.lastEventId) return false;
  state.lastEventId = id;
  // a real event supersedes anything the polling fallback made up
  if (state.feed.some((e) => e.synthetic)) {
    state.feed = state.feed.filter((e) => !e.synthetic);
  }
  if (kind === "transition") {
    const ev = data as TraceEvent;
    state.clockS = ev.t;
    state.phase = ev.to;
    state.feed.push({ id, kind, label: describe(ev), synthetic: false });
  } else if (kind === "complete") {
    const phase = (data as { phase?: string }).phase;
    if (phase) state.phase = phase;
    state.feed.push({ id, kind, label: "mission complete", synthetic: false });
  } else if (kind === "error") {
    const msg = (data as { message?: string }).message ?? "mission failed";
    state.feed.push({ id, kind, label: `mission error: ${msg}`, synthetic: false });
    pushToast(state, msg);
  }
  return true;
}

/**
 * Polling fallback: given a fresh phase from GET /sessions/{id}, note
 * the change in the feed without inventing event ids.
 */
export function applyPolledPhase(state: ConsoleState, phase: string): boolean {
  if (phase === state.phase) return false;
  state.feed.push({
    id: 0,
    kind: "transition",
    label: `phase → ${phase} (polled)`,
    synthetic: true,
  });
  state.phase = phase;
  return true;
}

export function setReport(state: ConsoleState, text: string): void {
  state.report = { text, display: extractReportDisplay(text) };
}

export function pushToast(state: ConsoleState, text: string): number {
  state.toastSeq += 1;
  state.toasts.push({ id: state.toastSeq, text });
  return state.toastSeq;
}

export function dismissToast(state: ConsoleState, id: number): void {
  state.toasts = state.toasts.filter((t) => t.id !== id);
}

// -- display-only geometry --------------------------------------------

/**
 * Where a target's approach axis points, for the table glyph. The axis
 * is the third column of the rotation the pose quaternion encodes;
 * azimuth is measured in the horizontal plane from the aisle (-y)
 * toward +x, elevation from the horizontal. Pure presentation: the
 * direction itself comes from the service.
 */
export function approachAngles(
  q: [number, number, number, number],
): { azimuthDeg: number; elevationDeg: number } {
  const [x, y, z, w] = q;
  const ax = 2 * (x * z + w * y);
  const ay = 2 * (y * z - w * x);
  const az = 1 - 2 * (x * x + y * y);
  const azimuthDeg = (Math.atan2(ax, -ay) * 180) / Math.PI;
  const elevationDeg = (Math.asin(Math.max(-1, Math.min(1, az))) * 180) / Math.PI;
  return { azimuthDeg, elevationDeg };
}
