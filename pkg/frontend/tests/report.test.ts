import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { CYCLE_FIELDS, extractReportDisplay, FRUIT_FIELDS, rawValueAt } from "../src/report.js";

const benchText = readFileSync(new URL("./fixtures/bench_report.json", import.meta.url), "utf8");
const emptyText = readFileSync(new URL("./fixtures/empty_report.json", import.meta.url), "utf8");

describe("rawValueAt", () => {
  it("walks nested objects to the exact value span", () => {
    const text = '{"a": {"b": 42, "c": {"d": "x"}}, "e": 1}';
    expect(rawValueAt(text, ["a", "b"])).toBe("42");
    expect(rawValueAt(text, ["a", "c", "d"])).toBe('"x"');
    expect(rawValueAt(text, ["e"])).toBe("1");
  });

  it("skips strings with escapes and nested brackets", () => {
    const text = '{"a": "brace } quote \\" ok", "b": [1, {"a": 9}, [2]], "c": true}';
    expect(rawValueAt(text, ["c"])).toBe("true");
    expect(rawValueAt(text, ["b"])).toBe('[1, {"a": 9}, [2]]');
  });

  it("preserves number formatting a parse round trip would lose", () => {
    // python writes 1e-07; JS String(1e-7) is "1e-7"
    const text = '{"x": 1e-07}';
    expect(rawValueAt(text, ["x"])).toBe("1e-07");
    expect(String(JSON.parse(text).x)).not.toBe("1e-07");
  });

  it("rejects missing keys", () => {
    expect(() => rawValueAt('{"a": 1}', ["b"])).toThrow(/not found/);
  });
});

describe("extractReportDisplay", () => {
  it("extracts every displayed field verbatim from the payload", () => {
    const d = extractReportDisplay(benchText);
    const doc = JSON.parse(benchText);
    for (const f of CYCLE_FIELDS) {
      // the mean block sorts before per_cluster, so the first match in
      // the raw text is the one the panel shows
      const m = benchText.match(new RegExp(`"${f}": ([^,\\n}]+)`));
      expect(m, f).not.toBeNull();
      expect(d.cycleMean[f]).toBe(m![1]);
      expect(Number(d.cycleMean[f])).toBe(doc.cycle_time.mean[f]);
    }
    for (const f of FRUIT_FIELDS) {
      const m = benchText.match(new RegExp(`"${f}": ([^,\\n}]+)`));
      expect(d.fruitSet[f]).toBe(m![1]);
    }
    expect(d.tourOrder).toEqual(doc.tour.order_cluster_ids);
    expect(Number(d.tourLength)).toBe(doc.tour.length_m);
  });

  it("carries target outcomes through for the badge grid", () => {
    const d = extractReportDisplay(benchText);
    expect(d.targetStates[3]).toEqual({ state: "rejected", reason: null });
    expect(d.targetStates[8]!.state).toBe("sprayed");
  });

  it("handles the empty mission report", () => {
    const d = extractReportDisplay(emptyText);
    for (const f of CYCLE_FIELDS) expect(d.cycleMean[f]).toBe("n/a");
    expect(d.fruitSet["set_given_sprayed_pct"]).toBe("null");
    expect(d.fruitSet["flowers_sprayed"]).toBe("0");
    expect(d.tourOrder).toEqual([]);
    expect(d.tourLength).toBe("n/a");
  });
});
