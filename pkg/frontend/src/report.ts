/**
 * Raw-text field extraction for the report panel.
 *
 * The console must show cycle-time and fruit-set values exactly as the
 * service serialized them, byte for byte. JSON.parse followed by
 * re-stringification could reformat a number, so displayed values are
 * cut straight out of the payload text by a tiny scanner that walks
 * the JSON structure and records the span of the value at a key path.
 * No domain arithmetic happens here: the scanner only locates bytes.
 */

interface Scanner {
  text: string;
  pos: number;
}

function skipWs(s: Scanner): void {
  while (s.pos < s.text.length && " \t\n\r".includes(s.text[s.pos]!)) s.pos++;
}

function fail(s: Scanner, what: string): never {
  throw new Error(`report scan: expected ${what} at offset ${s.pos}`);
}

function skipString(s: Scanner): string {
  if (s.text[s.pos] !== '"') fail(s, "string");
  const start = s.pos;
  s.pos++;
  while (s.pos < s.text.length) {
    const ch = s.text[s.pos];
    if (ch === "\\") {
      s.pos += 2;
      continue;
    }
    s.pos++;
    if (ch === '"') return JSON.parse(s.text.slice(start, s.pos));
  }
  fail(s, "closing quote");
}

/** Advance past one complete JSON value; return its [start, end) span. */
function skipValue(s: Scanner): [number, number] {
  skipWs(s);
  const start = s.pos;
  const ch = s.text[s.pos];
  if (ch === '"') {
    skipString(s);
  } else if (ch === "{" || ch === "[") {
    const close = ch === "{" ? "}" : "]";
    s.pos++;
    skipWs(s);
    if (s.text[s.pos] === close) {
      s.pos++;
    } else {
      for (;;) {
        if (ch === "{") {
          skipWs(s);
          skipString(s);
          skipWs(s);
          if (s.text[s.pos] !== ":") fail(s, "colon");
          s.pos++;
        }
        skipValue(s);
        skipWs(s);
        if (s.text[s.pos] === ",") {
          s.pos++;
          continue;
        }
        if (s.text[s.pos] === close) {
          s.pos++;
          break;
        }
        fail(s, `comma or ${close}`);
      }
    }
  } else if (ch && "-0123456789".includes(ch)) {
    while (s.pos < s.text.length && "+-0123456789.eE".includes(s.text[s.pos]!)) s.pos++;
  } else if (s.text.startsWith("true", s.pos)) {
    s.pos += 4;
  } else if (s.text.startsWith("false", s.pos)) {
    s.pos += 5;
  } else if (s.text.startsWith("null", s.pos)) {
    s.pos += 4;
  } else {
    fail(s, "value");
  }
  return [start, s.pos];
}

/**
 * The exact serialized text of the value at `path` (object keys only).
 * Throws if the path does not resolve.
 */
export function rawValueAt(text: string, path: string[]): string {
  const s: Scanner = { text, pos: 0 };
  let depth = 0;
  for (;;) {
    skipWs(s);
    if (depth === path.length) {
      const [a, b] = skipValue(s);
      return text.slice(a, b);
    }
    if (s.text[s.pos] !== "{") fail(s, "object");
    s.pos++;
    let found = false;
    for (;;) {
      skipWs(s);
      if (s.text[s.pos] === "}") break;
      const key = skipString(s);
      skipWs(s);
      if (s.text[s.pos] !== ":") fail(s, "colon");
      s.pos++;
      if (key === path[depth]) {
        found = true;
        depth++;
        break;
      }
      skipValue(s);
      skipWs(s);
      if (s.text[s.pos] === ",") s.pos++;
    }
    if (!found) throw new Error(`report scan: key "${path[depth]}" not found`);
  }
}

// the fields the report panel displays, in render order
export const CYCLE_FIELDS = [
  "acquire_s",
  "estimate_s",
  "plan_s",
  "move_s",
  "spray_s",
  "total_s",
] as const;

export const FRUIT_FIELDS = [
  "flowers_total",
  "flowers_sprayed",
  "flowers_set",
  "clusters_total",
  "clusters_attempted",
  "clusters_sprayed",
  "spray_coverage_pct",
  "cluster_coverage_pct",
  "set_rate_pct",
  "set_given_sprayed_pct",
] as const;

export interface ReportDisplay {
  cycleMean: Record<string, string>;
  fruitSet: Record<string, string>;
  tourOrder: number[];
  tourLength: string;
  targetStates: Record<number, { state: string; reason: string | null }>;
}

/** Pull every displayed field out of the raw payload text. */
export function extractReportDisplay(text: string): ReportDisplay {
  // structure (which keys exist, ids, lists) may be parsed normally;
  // only formatted quantities must stay verbatim
  const doc = JSON.parse(text);
  const cycleMean: Record<string, string> = {};
  for (const f of CYCLE_FIELDS) {
    // an empty mission has no cycle rows and an empty mean block
    cycleMean[f] = f in doc.cycle_time.mean ? rawValueAt(text, ["cycle_time", "mean", f]) : "n/a";
  }
  const fruitSet: Record<string, string> = {};
  for (const f of FRUIT_FIELDS) {
    fruitSet[f] = rawValueAt(text, ["fruit_set", f]);
  }
  const targetStates: ReportDisplay["targetStates"] = {};
  for (const t of doc.targets) {
    targetStates[t.cluster_id] = { state: t.state, reason: t.reason };
  }
  return {
    cycleMean,
    fruitSet,
    tourOrder: doc.tour.order_cluster_ids ?? [],
    tourLength: doc.tour.length_m === null ? "n/a" : rawValueAt(text, ["tour", "length_m"]),
    targetStates,
  };
}
