"""Operator console API: sessions, review, SSE stream, report bytes."""

import json
import time

import pytest
from fastapi.testclient import TestClient

from pollisim.mission import Mission, MissionParams, dump_report
from pollisim.orchard import SceneConfig, generate_scene
from pollisim.service import create_app

SMALL = {"scene_seed": 3, "n_clusters": 4, "seed": 7}


@pytest.fixture
def client():
    return TestClient(create_app())


def _new_session(client, body=None):
    r = client.post("/sessions", json=body or SMALL)
    assert r.status_code == 201, r.text
    return r.json()["session_id"]


def _run_to_completion(client, sid, timeout=60.0):
    assert client.post(f"/sessions/{sid}/mission/start").status_code == 202
    deadline = time.time() + timeout
    while time.time() < deadline:
        r = client.get(f"/sessions/{sid}/report")
        if r.status_code == 200:
            return r
        assert r.status_code == 409
        time.sleep(0.05)
    raise AssertionError("mission never completed")


def test_create_session_and_info(client):
    r = client.post("/sessions", json=SMALL)
    assert r.status_code == 201
    body = r.json()
    assert body["phase"] == "idle"
    assert body["scene"]["n_clusters"] == 4
    info = client.get(f"/sessions/{body['session_id']}")
    assert info.status_code == 200
    assert info.json() == body


def test_unknown_session_is_404_with_error_shape(client):
    r = client.get("/sessions/s9999")
    assert r.status_code == 404
    assert r.json() == {"code": "not_found", "message": "no session s9999"}


def test_perceive_once_then_conflict(client):
    sid = _new_session(client)
    r = client.post(f"/sessions/{sid}/perceive")
    assert r.status_code == 200
    assert r.json()["phase"] == "operator_review"
    assert len(r.json()["targets"]) == 4
    r = client.post(f"/sessions/{sid}/perceive")
    assert r.status_code == 409
    assert r.json()["code"] == "invalid_state"


def test_frame_endpoint(client):
    sid = _new_session(client)
    assert client.get(f"/sessions/{sid}/frame").status_code == 404
    client.post(f"/sessions/{sid}/perceive")
    for kind in ("rgb", "depth", "mask", "overlay"):
        r = client.get(f"/sessions/{sid}/frame", params={"kind": kind})
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content[:4] == b"\x89PNG"
    r = client.get(f"/sessions/{sid}/frame", params={"kind": "hologram"})
    assert r.status_code == 422
    assert r.json()["code"] == "validation_error"


def test_review_flow(client):
    sid = _new_session(client)
    client.post(f"/sessions/{sid}/perceive")
    r = client.post(f"/sessions/{sid}/targets/1/review",
                    json={"approve": False, "note": "occluded"})
    assert r.status_code == 200
    assert r.json()["state"] == "rejected"
    assert r.json()["note"] == "occluded"
    # re-review is allowed while the review window is open
    r = client.post(f"/sessions/{sid}/targets/1/review", json={"approve": True})
    assert r.status_code == 200
    assert r.json()["state"] == "approved"

    r = client.post(f"/sessions/{sid}/targets/999/review", json={"approve": True})
    assert r.status_code == 404
    r = client.post(f"/sessions/{sid}/targets/1/review", json={"note": "hm"})
    assert r.status_code == 422
    assert r.json()["code"] == "validation_error"


def test_start_requires_review_phase(client):
    sid = _new_session(client)
    r = client.post(f"/sessions/{sid}/mission/start")
    assert r.status_code == 409


def test_mission_runs_and_report_matches_library_bytes(client):
    sid = _new_session(client)
    client.post(f"/sessions/{sid}/perceive")
    r = _run_to_completion(client, sid)
    assert json.loads(r.content)["schema"] == "mission-report/1"

    scene = generate_scene(SceneConfig(seed=3, n_clusters=4))
    want = dump_report(Mission(scene, MissionParams(), seed=7).run())
    assert r.content.decode() == want


def test_start_twice_conflicts_and_review_closes(client):
    sid = _new_session(client)
    client.post(f"/sessions/{sid}/perceive")
    _run_to_completion(client, sid)
    assert client.post(f"/sessions/{sid}/mission/start").status_code == 409
    r = client.post(f"/sessions/{sid}/targets/1/review", json={"approve": True})
    assert r.status_code == 409


def test_rejected_cluster_is_skipped(client):
    sid = _new_session(client)
    client.post(f"/sessions/{sid}/perceive")
    client.post(f"/sessions/{sid}/targets/2/review",
                json={"approve": False, "note": "wrong row"})
    r = _run_to_completion(client, sid)
    doc = json.loads(r.content)
    assert 2 not in doc["tour"]["order_cluster_ids"]
    by_id = {t["cluster_id"]: t for t in doc["targets"]}
    assert by_id[2]["state"] == "rejected"


def test_event_stream_ids_and_terminal_event(client):
    sid = _new_session(client)
    client.post(f"/sessions/{sid}/perceive")
    _run_to_completion(client, sid)
    r = client.get(f"/sessions/{sid}/mission/events")
    assert r.headers["content-type"].startswith("text/event-stream")
    events = [blk for blk in r.text.strip().split("\n\n") if blk]
    ids = [int(blk.split("\n")[0].split(": ")[1]) for blk in events]
    assert ids == list(range(1, len(events) + 1))
    assert "event: complete" in events[-1]
    first = json.loads(events[0].split("data: ")[1])
    assert first == {"t": 0.0, "from": "idle", "to": "acquire_frame"}


def test_event_stream_resumes_from_last_event_id(client):
    sid = _new_session(client)
    client.post(f"/sessions/{sid}/perceive")
    _run_to_completion(client, sid)
    full = [b for b in client.get(f"/sessions/{sid}/mission/events")
            .text.strip().split("\n\n") if b]
    n = len(full)
    r = client.get(f"/sessions/{sid}/mission/events",
                   headers={"Last-Event-ID": str(n - 3)})
    tail = [b for b in r.text.strip().split("\n\n") if b]
    assert len(tail) == 3
    assert tail == full[-3:]
    # query parameter fallback for clients that cannot set headers
    r = client.get(f"/sessions/{sid}/mission/events",
                   params={"last_event_id": n - 1})
    tail = [b for b in r.text.strip().split("\n\n") if b]
    assert len(tail) == 1 and "event: complete" in tail[0]


def test_mission_param_overrides(client):
    body = dict(SMALL, mission={"execute_time_source": "trajectory"})
    sid = _new_session(client, body)
    client.post(f"/sessions/{sid}/perceive")
    doc = json.loads(_run_to_completion(client, sid).content)
    assert doc["cycle_time"]["source"] == "trajectory"

    r = client.post("/sessions", json=dict(SMALL, mission={"warp_drive": 9}))
    assert r.status_code == 422
    assert r.json()["code"] == "validation_error"
