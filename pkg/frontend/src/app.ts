import { Api, ApiFault } from "./api.js";
import { browserSource, MissionMonitor } from "./events.js";
import {
  applyReviewAck,
  applySession,
  applyTargets,
  beginReview,
  canStart,
  canSubmitReview,
  ConsoleState,
  dismissToast,
  endReview,
  initialState,
  needsEmptyConfirm,
  pushToast,
  reviewIntent,
  setReport,
} from "./model.js";
import { ConsoleView } from "./view.js";

const TOAST_MS = 6000;

class App {
  private state: ConsoleState = initialState();
  private api = new Api("");
  private view: ConsoleView;
  private monitor: MissionMonitor | null = null;
  private frameKind = "overlay";

  constructor(root: HTMLElement) {
    this.view = new ConsoleView(root, {
      onCreate: (a, b, c) => void this.create(a, b, c),
      onPerceive: () => void this.perceive(),
      onToggle: (cid) => void this.toggle(cid),
      onSubmitReview: () => this.submitReview(),
      onStart: () => void this.start(),
      onFrameKind: (kind) => this.pickFrame(kind),
      onDismissToast: (id) => {
        dismissToast(this.state, id);
        this.paint();
      },
    });
    this.paint();
  }

  private paint(): void {
    this.view.render(this.state);
  }

  private toast(err: unknown): void {
    const text = err instanceof ApiFault ? `${err.code}: ${err.message}` : String(err);
    const id = pushToast(this.state, text);
    setTimeout(() => {
      dismissToast(this.state, id);
      this.paint();
    }, TOAST_MS);
    this.paint();
  }

  private sid(): string {
    return this.state.session ? this.state.session.session_id : "";
  }

  private async create(sceneSeed: number, nClusters: number, seed: number): Promise<void> {
    if (this.monitor) this.monitor.stop();
    this.monitor = null;
    this.state = initialState();
    this.view.setFrame("", this.frameKind);
    try {
      applySession(this.state, await this.api.createSession({
        scene_seed: sceneSeed,
        n_clusters: nClusters,
        seed,
      }));
    } catch (err) {
      this.toast(err);
    }
    this.paint();
  }

  private async perceive(): Promise<void> {
    try {
      applyTargets(this.state, await this.api.perceive(this.sid()));
      this.pickFrame(this.frameKind);
    } catch (err) {
      this.toast(err);
    }
    this.paint();
  }

  private pickFrame(kind: string): void {
    this.frameKind = kind;
    if (this.state.targets.length > 0) {
      this.view.setFrame(this.api.frameUrl(this.sid(), kind as any), kind);
    }
    this.paint();
  }

  private async toggle(cid: number): Promise<void> {
    // a second click while the first request is out does nothing
    const approve = reviewIntent(this.state, cid);
    if (approve === null) return;
    beginReview(this.state, cid);
    this.paint();
    try {
      applyReviewAck(this.state, await this.api.review(this.sid(), cid, approve));
    } catch (err) {
      this.toast(err);
    } finally {
      endReview(this.state, cid);
    }
    this.paint();
  }

  private submitReview(): void {
    if (!canSubmitReview(this.state)) return;
    this.state.reviewSubmitted = true;
    this.paint();
  }

  private async start(): Promise<void> {
    if (!canStart(this.state)) return;
    if (needsEmptyConfirm(this.state)) {
      const go = window.confirm(
        "No clusters are approved. Run the mission anyway? It will spray nothing.",
      );
      if (!go) return;
    }
    try {
      await this.api.startMission(this.sid());
    } catch (err) {
      this.toast(err);
      return;
    }
    this.state.missionStarted = true;
    this.monitor = new MissionMonitor(this.state, {
      eventsUrl: (last) => this.api.eventsUrl(this.sid(), last),
      openStream: browserSource,
      pollPhase: async () => (await this.api.sessionInfo(this.sid())).phase,
      onChange: () => this.paint(),
      onApplied: (kind, data) => {
        // target states change on the service after each cluster; pull
        // the authoritative rows rather than inferring them
        if (kind === "transition" && (data as { to?: string }).to === "update_targets") {
          void this.refreshTargets();
        }
      },
      onTerminal: (kind) => {
        void this.refreshTargets();
        if (kind === "complete") void this.loadReport();
      },
    });
    this.monitor.start();
    this.paint();
  }

  private async refreshTargets(): Promise<void> {
    try {
      applyTargets(this.state, await this.api.getTargets(this.sid()));
    } catch {
      return; // transient; the next event will retry
    }
    this.paint();
  }

  private async loadReport(): Promise<void> {
    try {
      const { text } = await this.api.getReport(this.sid());
      setReport(this.state, text);
    } catch (err) {
      this.toast(err);
    }
    this.paint();
  }
}

const root = document.getElementById("app");
if (root) new App(root);
