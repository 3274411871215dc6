"""CLI surface: artifacts on disk, exit codes, determinism."""

import json

import pytest
from click.testing import CliRunner

from pollisim.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def _write_scene(runner, tmp_path, seed=3, clusters=5):
    path = tmp_path / "scene.json"
    result = runner.invoke(main, ["generate", "--seed", str(seed),
                                  "--clusters", str(clusters), "-o", str(path)])
    assert result.exit_code == 0, result.output
    return path


def test_generate_is_deterministic(runner, tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    c = tmp_path / "c.json"
    assert runner.invoke(main, ["generate", "--seed", "5", "-o", str(a)]).exit_code == 0
    assert runner.invoke(main, ["generate", "--seed", "5", "-o", str(b)]).exit_code == 0
    assert runner.invoke(main, ["generate", "--seed", "6", "-o", str(c)]).exit_code == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
    assert json.loads(a.read_text())["schema"] == "orchard/1"


def test_render_then_perceive_pipeline(runner, tmp_path):
    scene = _write_scene(runner, tmp_path)
    frame_dir = tmp_path / "frame"
    result = runner.invoke(main, ["render", str(scene), "-o", str(frame_dir),
                                  "--width", "320", "--height", "180"])
    assert result.exit_code == 0, result.output
    for name in ("depth.png", "mask.png", "rgb.png", "frame.json"):
        assert (frame_dir / name).exists()

    targets_path = tmp_path / "targets.json"
    result = runner.invoke(main, ["perceive", str(frame_dir),
                                  "-o", str(targets_path)])
    assert result.exit_code == 0, result.output
    doc = json.loads(targets_path.read_text())
    assert doc["schema"] == "targets/1"
    assert len(doc["targets"]) == 5
    assert "pending_review" in result.output


def test_run_reports_are_byte_identical(runner, tmp_path):
    scene = _write_scene(runner, tmp_path)
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    args = ["run", "--scene", str(scene), "--seed", "7"]
    assert runner.invoke(main, args + ["-o", str(out1)]).exit_code == 0
    assert runner.invoke(main, args + ["-o", str(out2)]).exit_code == 0
    assert out1.read_bytes() == out2.read_bytes()
    doc = json.loads(out1.read_text())
    assert doc["schema"] == "mission-report/1"
    assert doc["fruit_set"]["clusters_sprayed"] == 5


def test_run_writes_trace_jsonl(runner, tmp_path):
    scene = _write_scene(runner, tmp_path)
    trace = tmp_path / "trace.jsonl"
    result = runner.invoke(main, ["run", "--scene", str(scene), "--seed", "1",
                                  "-o", str(tmp_path / "r.json"),
                                  "--trace", str(trace)])
    assert result.exit_code == 0
    entries = [json.loads(ln) for ln in trace.read_text().strip().split("\n")]
    assert entries[0]["from"] == "idle"
    assert entries[-1]["to"] == "complete"


def test_run_flag_and_config_overrides(runner, tmp_path):
    scene = _write_scene(runner, tmp_path)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mission": {"execute_time_source": "trajectory"}}))
    out = tmp_path / "r.json"
    result = runner.invoke(main, ["run", "--scene", str(scene), "--seed", "1",
                                  "--config", str(cfg), "--concentration", "1.0",
                                  "-o", str(out)])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert doc["cycle_time"]["source"] == "trajectory"
    assert doc["concentration_g_per_l"] == 1.0


def test_plan_writes_tour_and_trajectories(runner, tmp_path):
    scene = _write_scene(runner, tmp_path)
    out = tmp_path / "plan.json"
    traj = tmp_path / "traj"
    result = runner.invoke(main, ["plan", str(scene), "-o", str(out),
                                  "--traj-dir", str(traj)])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert doc["schema"] == "plan/1"
    assert len(doc["tour"]["order_cluster_ids"]) == 5
    planned = [c for c in doc["clusters"] if "duration_s" in c]
    assert len(planned) == 5
    assert len(list(traj.glob("cluster_*.csv"))) == 5


def test_report_summary(runner, tmp_path):
    scene = _write_scene(runner, tmp_path)
    out = tmp_path / "r.json"
    runner.invoke(main, ["run", "--scene", str(scene), "--seed", "7",
                         "-o", str(out)])
    result = runner.invoke(main, ["report", str(out)])
    assert result.exit_code == 0
    assert "cycle mean" in result.output
    assert "return leg included" in result.output


def test_report_rejects_other_documents(runner, tmp_path):
    bogus = tmp_path / "x.json"
    bogus.write_text(json.dumps({"schema": "something/9"}))
    result = runner.invoke(main, ["report", str(bogus)])
    assert result.exit_code == 1
    assert "error:" in result.output


def test_stats_command(runner, tmp_path):
    csv_path = tmp_path / "fruit.csv"
    rows = ["site,treatment,blush_pct,weight_g,diameter_mm,firmness_lbf,brix,starch,disorder"]
    values = {"robot": [13.1, 13.9, 14.3, 13.6], "hand": [12.9, 13.2, 13.8, 13.0],
              "control": [12.0, 12.4, 12.8, 11.9]}
    for treatment, brixes in values.items():
        for bx in brixes:
            rows.append(f"east,{treatment},50,180,74,16,{bx},3,0")
    csv_path.write_text("\n".join(rows) + "\n")

    out = tmp_path / "analysis.json"
    result = runner.invoke(main, ["stats", str(csv_path), "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert "brix: H=" in result.output
    doc = json.loads(out.read_text())
    assert doc["schema"] == "analysis-report/1"
    assert doc["metrics"]["brix"]["kruskal_wallis"]["df"] == 2


def test_stats_rejects_bad_header(runner, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    result = runner.invoke(main, ["stats", str(bad)])
    assert result.exit_code == 1
    assert "error:" in result.output


def test_usage_errors_exit_2(runner):
    assert runner.invoke(main, ["run"]).exit_code == 2
    assert runner.invoke(main, ["generate"]).exit_code == 2
    assert runner.invoke(main, ["no-such-command"]).exit_code == 2
