"""Record console test fixtures from the real service.

Drives the session API in-process and saves the raw response bodies the
console tests replay. Report payloads are written byte for byte as the
endpoint returned them; the display tests assert against those exact
bytes. Rerun after any service change:

    python3 scripts/record_fixtures.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from pollisim.service import create_app

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

REJECT_IDS = (3, 7)


def drain_events(client, sid):
    events = []
    with client.stream("GET", f"/sessions/{sid}/mission/events") as res:
        cur = {}
        for line in res.iter_lines():
            if line == "":
                if cur:
                    events.append(cur)
                    cur = {}
                continue
            key, _, value = line.partition(": ")
            cur[key] = value
    rows = [{"id": int(e["id"]), "event": e["event"],
             "data": json.loads(e["data"])} for e in events]
    assert rows[-1]["event"] in ("complete", "error")
    return rows


def record_bench(client):
    res = client.post("/sessions", json={"scene_seed": 14, "n_clusters": 16,
                                         "seed": 7})
    assert res.status_code == 201, res.text
    sid = res.json()["session_id"]
    (OUT / "bench_session.json").write_text(res.text + "\n")

    res = client.post(f"/sessions/{sid}/perceive")
    assert res.status_code == 200, res.text
    (OUT / "bench_targets.json").write_text(res.text + "\n")

    acks = []
    for cid in REJECT_IDS:
        res = client.post(f"/sessions/{sid}/targets/{cid}/review",
                          json={"approve": False, "note": "operator"})
        assert res.status_code == 200, res.text
        acks.append(res.json())
    (OUT / "bench_review_acks.json").write_text(
        json.dumps(acks, indent=2) + "\n")

    assert client.post(f"/sessions/{sid}/mission/start").status_code == 202
    rows = drain_events(client, sid)
    (OUT / "bench_events.jsonl").write_text(
        "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n")

    res = client.get(f"/sessions/{sid}/report")
    assert res.status_code == 200
    (OUT / "bench_report.json").write_bytes(res.content)

    res = client.get(f"/sessions/{sid}/targets")
    (OUT / "bench_targets_final.json").write_text(res.text + "\n")


def record_empty(client):
    res = client.post("/sessions", json={"scene_seed": 14, "n_clusters": 4,
                                         "seed": 7})
    sid = res.json()["session_id"]
    targets = client.post(f"/sessions/{sid}/perceive").json()["targets"]
    for t in targets:
        if t["state"] == "pending_review":
            res = client.post(f"/sessions/{sid}/targets/{t['cluster_id']}/review",
                              json={"approve": False})
            assert res.status_code == 200, res.text
    res = client.get(f"/sessions/{sid}/targets")
    (OUT / "empty_targets.json").write_text(res.text + "\n")
    assert client.post(f"/sessions/{sid}/mission/start").status_code == 202
    drain_events(client, sid)
    res = client.get(f"/sessions/{sid}/report")
    assert res.status_code == 200
    (OUT / "empty_report.json").write_bytes(res.content)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    client = TestClient(create_app())
    record_bench(client)
    record_empty(client)
    for p in sorted(OUT.iterdir()):
        print(f"{p.name:28s} {p.stat().st_size:8d} bytes")


if __name__ == "__main__":
    main()
