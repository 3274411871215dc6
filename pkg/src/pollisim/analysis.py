"""Post-harvest fruit quality analysis.

Field measurements arrive as one CSV row per fruit. Treatments are
compared with Kruskal-Wallis rank tests plus Dunn's post-hoc pairwise
z tests (Bonferroni adjusted), matching how small unbalanced orchard
samples are usually reported. Quartiles follow the linear-interpolation
convention so box statistics line up with numpy and mainstream plotting
defaults.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
from scipy import stats as sps

from .errors import UndefinedMetricError

ANALYSIS_SCHEMA = "analysis-report/1"

CSV_FIELDS = ("site", "treatment", "blush_pct", "weight_g", "diameter_mm",
              "firmness_lbf", "brix", "starch", "disorder")

# metrics that get per-treatment distributions and rank tests
NUMERIC_METRICS = ("blush_pct", "weight_g", "diameter_mm",
                   "firmness_lbf", "brix", "starch")


@dataclass(frozen=True)
class FruitRecord:
    site: str
    treatment: str
    blush_pct: float
    weight_g: float
    diameter_mm: float
    firmness_lbf: float
    brix: float
    starch: float
    disorder: int

    def __post_init__(self):
        if self.disorder not in (0, 1):
            raise ValueError("disorder must be 0 or 1")


def save_records(path, records: Sequence[FruitRecord]):
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in records:
            writer.writerow([getattr(r, f) for f in CSV_FIELDS])


def load_records(path) -> List[FruitRecord]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_FIELDS:
        raise ValueError(f"expected header {','.join(CSV_FIELDS)}")
    records = []
    for row in rows[1:]:
        if not row:
            continue
        if len(row) != len(CSV_FIELDS):
            raise ValueError(f"row has {len(row)} fields, expected {len(CSV_FIELDS)}")
        records.append(FruitRecord(
            site=row[0], treatment=row[1],
            blush_pct=float(row[2]), weight_g=float(row[3]),
            diameter_mm=float(row[4]), firmness_lbf=float(row[5]),
            brix=float(row[6]), starch=float(row[7]),
            disorder=int(row[8])))
    return records


def groups_by_treatment(records: Sequence[FruitRecord], metric: str
                        ) -> Dict[str, np.ndarray]:
    """Metric values keyed by treatment, treatments in first-seen order."""
    if metric not in CSV_FIELDS[2:]:
        raise ValueError(f"unknown metric {metric!r}")
    out: Dict[str, list] = {}
    for r in records:
        out.setdefault(r.treatment, []).append(float(getattr(r, metric)))
    return {k: np.asarray(v, dtype=float) for k, v in out.items()}


def summarize(values) -> dict:
    """n, mean, sd and a t-based 95 percent confidence interval."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise UndefinedMetricError("summary of an empty sample")
    out = {"n": int(x.size), "mean": float(x.mean()),
           "min": float(x.min()), "max": float(x.max())}
    if x.size >= 2:
        sd = float(x.std(ddof=1))
        sem = sd / math.sqrt(x.size)
        half = float(sps.t.ppf(0.975, x.size - 1)) * sem
        out.update(sd=sd, ci95=[out["mean"] - half, out["mean"] + half])
    else:
        out.update(sd=None, ci95=None)
    return out


def _tie_term(all_values: np.ndarray) -> float:
    """Sum of t^3 - t over groups of tied values."""
    _, counts = np.unique(all_values, return_counts=True)
    t = counts.astype(float)
    return float(((t ** 3) - t).sum())


def kruskal_wallis(groups: Sequence) -> dict:
    """Tie-corrected Kruskal-Wallis H and its chi-square p-value.

    With every observation identical the tie correction removes all
    rank variance; that degenerate case is reported as H = 0, p = 1.
    """
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("groups must be non-empty")
    sizes = np.array([g.size for g in groups])
    pooled = np.concatenate(groups)
    n_total = pooled.size
    ranks = sps.rankdata(pooled)
    h = 0.0
    start = 0
    for n_i in sizes:
        r_mean = ranks[start:start + n_i].mean()
        h += n_i * (r_mean - (n_total + 1) / 2.0) ** 2
        start += n_i
    h *= 12.0 / (n_total * (n_total + 1))
    correction = 1.0 - _tie_term(pooled) / (n_total ** 3 - n_total)
    if correction <= 0.0:
        return {"H": 0.0, "p_value": 1.0, "df": len(groups) - 1}
    h /= correction
    df = len(groups) - 1
    return {"H": float(h), "p_value": float(sps.chi2.sf(h, df)), "df": df}


def dunn_posthoc(groups: Sequence, labels: Sequence[str] = None) -> List[dict]:
    """Dunn's pairwise z tests on pooled ranks, Bonferroni adjusted.

    The variance term uses the tie-corrected pooled expression
    N(N+1)/12 - sum(t^3 - t)/(12(N-1)) shared by every pair.
    """
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    if labels is None:
        labels = [str(i) for i in range(len(groups))]
    if len(labels) != len(groups):
        raise ValueError("one label per group")
    sizes = [g.size for g in groups]
    pooled = np.concatenate(groups)
    n_total = pooled.size
    ranks = sps.rankdata(pooled)
    means = []
    start = 0
    for n_i in sizes:
        means.append(ranks[start:start + n_i].mean())
        start += n_i
    var_base = (n_total * (n_total + 1) / 12.0
                - _tie_term(pooled) / (12.0 * (n_total - 1)))
    n_pairs = len(groups) * (len(groups) - 1) // 2
    out = []
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            se = math.sqrt(var_base * (1.0 / sizes[i] + 1.0 / sizes[j]))
            if se == 0.0:
                z, p = 0.0, 1.0
            else:
                z = (means[i] - means[j]) / se
                p = 2.0 * float(sps.norm.sf(abs(z)))
            out.append({"a": labels[i], "b": labels[j], "z": float(z),
                        "p_value": p, "p_adjusted": min(1.0, p * n_pairs)})
    return out


def boxplot_summary(values) -> dict:
    """Five-number box with Tukey 1.5 IQR whiskers.

    Quartiles interpolate linearly between order statistics; whiskers
    sit on the most extreme observations inside the fences and the rest
    are listed as outliers.
    """
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise UndefinedMetricError("box summary of an empty sample")
    q1, q2, q3 = (float(v) for v in np.percentile(x, [25.0, 50.0, 75.0]))
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = x[(x < lo_fence) | (x > hi_fence)]
    return {"n": int(x.size), "median": q2, "q1": q1, "q3": q3, "iqr": iqr,
            "whisker_low": float(inside[0]), "whisker_high": float(inside[-1]),
            "outliers": [float(v) for v in outliers]}


def analyze_records(records: Sequence[FruitRecord],
                    metrics: Sequence[str] = NUMERIC_METRICS) -> dict:
    """Per-treatment summaries plus rank tests for each metric."""
    if not records:
        raise UndefinedMetricError("no records to analyze")
    report = {"schema": ANALYSIS_SCHEMA, "n_records": len(records),
              "metrics": {}}
    for metric in metrics:
        grouped = groups_by_treatment(records, metric)
        labels = list(grouped.keys())
        entry = {
            "treatments": {lab: {"summary": summarize(vals),
                                 "box": boxplot_summary(vals)}
                           for lab, vals in grouped.items()},
        }
        if len(labels) >= 2 and all(g.size for g in grouped.values()):
            entry["kruskal_wallis"] = kruskal_wallis(list(grouped.values()))
            entry["dunn"] = dunn_posthoc(list(grouped.values()), labels)
        report["metrics"][metric] = entry
    # disorder incidence is a proportion, not a distribution
    by_treat: Dict[str, list] = {}
    for r in records:
        by_treat.setdefault(r.treatment, []).append(r.disorder)
    report["disorder_incidence_pct"] = {
        lab: float(100.0 * np.mean(flags)) for lab, flags in by_treat.items()}
    return report


def dump_analysis(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
