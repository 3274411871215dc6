/**
 * DOM layer. Builds the page skeleton once, then repaints the dynamic
 * regions from ConsoleState on every change. No state lives in the
 * DOM; everything shown is read back out of the model.
 */

import {
  approachAngles,
  canStart,
  canSubmitReview,
  ConsoleState,
  effectiveApproved,
  isReviewable,
} from "./model.js";
import { CYCLE_FIELDS, FRUIT_FIELDS } from "./report.js";
import { TargetRow } from "./types.js";

export interface ViewHandlers {
  onCreate(sceneSeed: number, nClusters: number, seed: number): void;
  onPerceive(): void;
  onToggle(clusterId: number): void;
  onSubmitReview(): void;
  onStart(): void;
  onFrameKind(kind: string): void;
  onDismissToast(id: number): void;
}

const esc = (s: unknown): string =>
  String(s).replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

const FRAME_KINDS = ["overlay", "rgb", "depth", "mask"];

const STATE_LABELS: Record<string, string> = {
  pending_review: "pending",
  approved: "approved",
  rejected: "rejected",
  auto_rejected: "auto-rejected",
  sprayed: "sprayed",
  failed: "failed",
};

export class ConsoleView {
  private root: HTMLElement;
  private handlers: ViewHandlers;
  private frameKind = "overlay";
  private frameSrc = "";

  constructor(root: HTMLElement, handlers: ViewHandlers) {
    this.root = root;
    this.handlers = handlers;
    this.buildSkeleton();
  }

  private $(sel: string): HTMLElement {
    return this.root.querySelector(sel) as HTMLElement;
  }

  private buildSkeleton(): void {
    this.root.innerHTML = `
      <header>
        <h1>pollination console</h1>
        <div id="status">
          <span id="session-id" class="mono"></span>
          <span id="phase" class="pill"></span>
          <span id="clock" class="mono"></span>
          <span id="stream-mode"></span>
        </div>
      </header>
      <section id="setup">
        <label>scene seed <input id="in-scene" type="number" value="14"></label>
        <label>clusters <input id="in-clusters" type="number" value="16"></label>
        <label>mission seed <input id="in-seed" type="number" value="7"></label>
        <button id="btn-create">new session</button>
        <button id="btn-perceive" disabled>perceive</button>
      </section>
      <main>
        <section id="frame-panel">
          <div id="frame-tabs"></div>
          <img id="frame" alt="camera frame">
          <div id="frame-note" class="dim">no frame yet</div>
        </section>
        <section id="targets-panel">
          <h2>targets</h2>
          <table id="targets">
            <thead><tr>
              <th>id</th><th>depth m</th><th>approach</th><th></th>
              <th>conf</th><th>px</th><th>state</th><th>reason / note</th>
            </tr></thead>
            <tbody></tbody>
          </table>
          <div id="review-bar">
            <span id="review-counts"></span>
            <button id="btn-review">submit review</button>
            <button id="btn-start" disabled>start mission</button>
          </div>
        </section>
      </main>
      <section id="feed-panel">
        <h2>events</h2>
        <ul id="feed"></ul>
      </section>
      <section id="report-panel" hidden>
        <h2>mission report</h2>
        <div id="report"></div>
      </section>
      <div id="toasts"></div>
    `;
    this.$("#btn-create").addEventListener("click", () => {
      const num = (id: string) => Number((this.$(id) as HTMLInputElement).value);
      this.handlers.onCreate(num("#in-scene"), num("#in-clusters"), num("#in-seed"));
    });
    this.$("#btn-perceive").addEventListener("click", () => this.handlers.onPerceive());
    this.$("#btn-review").addEventListener("click", () => this.handlers.onSubmitReview());
    this.$("#btn-start").addEventListener("click", () => this.handlers.onStart());
    const tabs = this.$("#frame-tabs");
    for (const kind of FRAME_KINDS) {
      const b = document.createElement("button");
      b.textContent = kind;
      b.dataset.kind = kind;
      b.addEventListener("click", () => this.handlers.onFrameKind(kind));
      tabs.appendChild(b);
    }
    this.$("#targets").addEventListener("click", (e) => {
      const tr = (e.target as HTMLElement).closest("tr[data-cid]");
      if (tr) this.handlers.onToggle(Number((tr as HTMLElement).dataset.cid));
    });
    this.$("#toasts").addEventListener("click", (e) => {
      const t = (e.target as HTMLElement).closest("[data-toast]");
      if (t) this.handlers.onDismissToast(Number((t as HTMLElement).dataset.toast));
    });
  }

  setFrame(src: string, kind: string): void {
    this.frameKind = kind;
    this.frameSrc = src;
  }

  render(state: ConsoleState): void {
    this.renderHeader(state);
    this.renderFrame(state);
    this.renderTargets(state);
    this.renderFeed(state);
    this.renderReport(state);
    this.renderToasts(state);
  }

  private renderHeader(state: ConsoleState): void {
    this.$("#session-id").textContent = state.session ? state.session.session_id : "";
    this.$("#phase").textContent = state.phase;
    this.$("#clock").textContent = state.clockS !== null ? `t=${state.clockS.toFixed(1)}s` : "";
    this.$("#stream-mode").textContent =
      state.streamMode === "poll" ? "stream down, polling" : "";
    (this.$("#btn-perceive") as HTMLButtonElement).disabled =
      !state.session || state.phase !== "idle";
  }

  private renderFrame(state: ConsoleState): void {
    const img = this.$("#frame") as HTMLImageElement;
    const note = this.$("#frame-note");
    for (const b of this.$("#frame-tabs").querySelectorAll("button")) {
      b.classList.toggle("active", b.dataset.kind === this.frameKind);
    }
    if (this.frameSrc && img.getAttribute("src") !== this.frameSrc) {
      img.src = this.frameSrc;
    }
    img.style.display = this.frameSrc ? "block" : "none";
    note.style.display = this.frameSrc ? "none" : "block";
    void state;
  }

  private targetRowHtml(state: ConsoleState, t: TargetRow): string {
    const depth = t.depth_median_m === null ? "-" : t.depth_median_m.toFixed(3);
    let approach = "-";
    let glyph = "";
    if (t.pose_world) {
      const a = approachAngles(t.pose_world.quaternion);
      approach = `az ${a.azimuthDeg.toFixed(0)}° el ${a.elevationDeg.toFixed(0)}°`;
      glyph = `<span class="glyph" style="transform: rotate(${(-a.azimuthDeg).toFixed(0)}deg)">↑</span>`;
    }
    const conf = t.confidence === null ? "-" : t.confidence.toFixed(2);
    const why = t.reason ?? t.note ?? "";
    const pending = state.pendingReview.has(t.cluster_id) ? " pending-io" : "";
    const cls = `state-${t.state}${pending}` + (isReviewable(t) ? " reviewable" : "");
    return `<tr data-cid="${t.cluster_id}" class="${cls}">
      <td>${t.cluster_id}</td><td>${depth}</td><td>${approach}</td><td>${glyph}</td>
      <td>${conf}</td><td>${t.n_valid_pixels}</td>
      <td><span class="badge b-${t.state}">${esc(STATE_LABELS[t.state] ?? t.state)}</span></td>
      <td class="dim">${esc(why)}</td>
    </tr>`;
  }

  private renderTargets(state: ConsoleState): void {
    const tbody = this.$("#targets").querySelector("tbody") as HTMLElement;
    tbody.innerHTML = state.targets.map((t) => this.targetRowHtml(state, t)).join("");
    const counts = this.$("#review-counts");
    const run = effectiveApproved(state).length;
    const rejected = state.targets.filter((t) => t.state === "rejected").length;
    const auto = state.targets.filter((t) => t.state === "auto_rejected").length;
    counts.textContent = state.targets.length
      ? `${run} to spray, ${rejected} rejected, ${auto} auto-rejected`
      : "";
    (this.$("#btn-review") as HTMLButtonElement).disabled = !canSubmitReview(state);
    (this.$("#btn-start") as HTMLButtonElement).disabled = !canStart(state);
  }

  private renderFeed(state: ConsoleState): void {
    const feed = this.$("#feed");
    feed.innerHTML = state.feed
      .map((e) => `<li class="${e.synthetic ? "synthetic" : ""}">${esc(e.label)}</li>`)
      .join("");
    feed.scrollTop = feed.scrollHeight;
  }

  private renderReport(state: ConsoleState): void {
    const panel = this.$("#report-panel");
    if (!state.report) {
      panel.hidden = true;
      return;
    }
    panel.hidden = false;
    const d = state.report.display;
    const cycleRows = CYCLE_FIELDS.map(
      (f) => `<tr><td>${f.replace(/_s$/, "")}</td><td class="mono">${esc(d.cycleMean[f])}</td></tr>`,
    ).join("");
    const fruitRows = FRUIT_FIELDS.map(
      (f) => `<tr><td>${f}</td><td class="mono">${esc(d.fruitSet[f])}</td></tr>`,
    ).join("");
    const badges = Object.entries(d.targetStates)
      .map(([cid, t]) => {
        const why = t.reason ? ` (${esc(t.reason)})` : "";
        return `<span class="badge b-${t.state}">${cid}: ${esc(t.state)}${why}</span>`;
      })
      .join(" ");
    this.$("#report").innerHTML = `
      <div class="report-grid">
        <div>
          <h3>mean cycle time (s)</h3>
          <table>${cycleRows}</table>
        </div>
        <div>
          <h3>fruit set</h3>
          <table>${fruitRows}</table>
        </div>
        <div>
          <h3>outcomes</h3>
          <div class="badges">${badges}</div>
          <h3>tour</h3>
          <div class="mono">order: [${d.tourOrder.join(", ")}]</div>
          <div class="mono">length_m: ${esc(d.tourLength)}</div>
        </div>
      </div>`;
  }

  private renderToasts(state: ConsoleState): void {
    this.$("#toasts").innerHTML = state.toasts
      .map((t) => `<div class="toast" data-toast="${t.id}">${esc(t.text)}</div>`)
      .join("");
  }
}
