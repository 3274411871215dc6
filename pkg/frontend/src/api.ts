import { SessionSummary, TargetRow, TargetsPayload } from "./types.js";

/** Non-2xx response, carrying the service's {code, message} body. */
export class ApiFault extends Error {
  status: number;
  code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

async function readFault(res: Response): Promise<ApiFault> {
  let code = "http_error";
  let message = `${res.status} ${res.statusText}`;
  try {
    const body = await res.json();
    if (body && typeof body.message === "string") {
      code = body.code ?? code;
      message = body.message;
    }
  } catch {
    // non-JSON error body, keep the status line
  }
  return new ApiFault(res.status, code, message);
}

export interface CreateSessionBody {
  scene_seed: number;
  n_clusters: number;
  seed: number;
}

/**
 * Thin client over the session API. Every method maps to one endpoint
 * and returns the response as-is; nothing here interprets results.
 */
export class Api {
  private base: string;
  private fetchFn: FetchFn;

  constructor(base = "", fetchFn: FetchFn = (u, i) => fetch(u, i)) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async call(method: string, path: string, body?: unknown): Promise<Response> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchFn(this.base + path, init);
    if (!res.ok) throw await readFault(res);
    return res;
  }

  async createSession(body: CreateSessionBody): Promise<SessionSummary> {
    return (await this.call("POST", "/sessions", body)).json();
  }

  async sessionInfo(id: string): Promise<SessionSummary> {
    return (await this.call("GET", `/sessions/${id}`)).json();
  }

  async perceive(id: string): Promise<TargetsPayload> {
    return (await this.call("POST", `/sessions/${id}/perceive`)).json();
  }

  async getTargets(id: string): Promise<TargetsPayload> {
    return (await this.call("GET", `/sessions/${id}/targets`)).json();
  }

  async review(id: string, clusterId: number, approve: boolean, note?: string): Promise<TargetRow> {
    const body: { approve: boolean; note?: string } = { approve };
    if (note !== undefined) body.note = note;
    return (await this.call("POST", `/sessions/${id}/targets/${clusterId}/review`, body)).json();
  }

  async startMission(id: string): Promise<void> {
    await this.call("POST", `/sessions/${id}/mission/start`, {});
  }

  /** Raw payload text plus the parsed document; the panel displays the text. */
  async getReport(id: string): Promise<{ text: string; doc: any }> {
    const res = await this.call("GET", `/sessions/${id}/report`);
    const text = await res.text();
    return { text, doc: JSON.parse(text) };
  }

  frameUrl(id: string, kind: "rgb" | "depth" | "mask" | "overlay"): string {
    return `${this.base}/sessions/${id}/frame?kind=${kind}`;
  }

  eventsUrl(id: string, lastEventId: number): string {
    const tail = lastEventId > 0 ? `?last_event_id=${lastEventId}` : "";
    return `${this.base}/sessions/${id}/mission/events${tail}`;
  }
}
