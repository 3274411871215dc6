"""Command line front door.

Every subcommand is a thin composition of library calls; nothing here
computes anything itself. Exit codes: 0 on success, 1 when a domain
error surfaces (unreachable target, empty tank, bad data file), 2 for
usage mistakes.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from .analysis import analyze_records, dump_analysis, load_records
from .arm import export_trajectory_csv, flange_pose, ik, plan_motion, standoff_pose
from .config import load_config, merge_config
from .errors import PlanFailedError, PollinationError, UnreachableError
from .mission import Mission, dump_report
from .orchard import RenderedFrame, Scene, generate_scene, render_frame
from .perception import (
    OracleSegmenter,
    approved_targets,
    auto_filter,
    build_targets,
    close_review,
)
from .sequencing import solve_tour, tour_length


class _Cli(click.Group):
    """Translate domain and data errors into exit code 1."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (PollinationError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(1)


@click.group(cls=_Cli)
@click.version_option(package_name="pollisim")
def main():
    """Simulated robotic blossom pollination toolkit."""


@main.command()
@click.option("--seed", type=int, default=0, show_default=True,
              help="Scene layout seed.")
@click.option("--clusters", type=int, default=16, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="JSON config with a 'scene' section.")
@click.option("-o", "--output", type=click.Path(), required=True)
def generate(seed, clusters, config_path, output):
    """Generate a synthetic orchard scene file."""
    cfg = load_config(config_path)
    scene_cfg = dataclasses.replace(cfg.scene, seed=seed, n_clusters=clusters)
    scene = generate_scene(scene_cfg)
    scene.save(output)
    click.echo(f"scene: {len(scene.clusters)} clusters, "
               f"{scene.flower_count} flowers -> {output}")


@main.command()
@click.argument("scene_path", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), required=True,
              help="Frame directory (depth.png, mask.png, rgb.png, frame.json).")
@click.option("--width", type=int, default=1280, show_default=True)
@click.option("--height", type=int, default=720, show_default=True)
@click.option("--dropout", type=float, default=0.0, show_default=True)
@click.option("--noise-coeff", type=float, default=0.0, show_default=True,
              help="Depth noise sigma coefficient (m per m^2).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def render(scene_path, output, width, height, dropout, noise_coeff, seed,
           config_path):
    """Render an RGB-D frame of a scene from the rig camera."""
    cfg = load_config(config_path)
    params = dataclasses.replace(cfg.mission, camera_width=width,
                                 camera_height=height)
    scene = Scene.load(scene_path)
    frame = render_frame(scene, params.camera(), params.camera_pose(),
                         dropout=dropout, noise_coeff=noise_coeff, seed=seed)
    frame.save(output)
    valid = int((frame.depth_m > 0).sum())
    click.echo(f"frame: {width}x{height}, {valid} valid depth px, "
               f"{len(np.unique(frame.mask)) - 1} clusters visible -> {output}")


@main.command()
@click.argument("frame_dir", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def perceive(frame_dir, output, seed, config_path):
    """Segment a frame, estimate cluster poses, apply the auto filter."""
    cfg = load_config(config_path)
    p = cfg.mission
    frame = RenderedFrame.load(frame_dir)
    detections = OracleSegmenter(p.segmenter).segment(frame, seed=seed)
    targets = build_targets(frame, detections, p.normals,
                            min_valid_pixels=p.min_valid_pixels)
    auto_filter(targets, frame.camera_pose.position, max_range=p.max_range_m,
                max_facing_angle_deg=p.max_facing_angle_deg)
    doc = {"schema": "targets/1", "targets": [t.to_dict() for t in targets]}
    Path(output).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    for t in targets:
        why = f" ({t.reason})" if t.reason else ""
        click.echo(f"cluster {t.cluster_id}: {t.state}{why}")


@main.command()
@click.argument("scene_path", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--traj-dir", type=click.Path(), default=None,
              help="Also write per-cluster trajectory CSVs here.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def plan(scene_path, output, seed, traj_dir, config_path):
    """Visit order and arm trajectories for every reachable cluster."""
    cfg = load_config(config_path)
    p = cfg.mission
    scene = Scene.load(scene_path)
    frame = render_frame(scene, p.camera(), p.camera_pose(),
                         dropout=p.dropout, noise_coeff=p.noise_coeff, seed=seed)
    detections = OracleSegmenter(p.segmenter).segment(frame, seed=seed)
    targets = build_targets(frame, detections, p.normals,
                            min_valid_pixels=p.min_valid_pixels)
    auto_filter(targets, p.camera_pose().position, max_range=p.max_range_m,
                max_facing_angle_deg=p.max_facing_angle_deg)
    close_review(targets)
    approved = approved_targets(targets)

    arm = p.arm()
    q = np.asarray(p.home_q, dtype=float)
    doc = {"schema": "plan/1", "tour": None, "clusters": []}
    if approved:
        sites = [flange_pose(arm, q).position] + [
            standoff_pose(t.pose_world, p.standoff_m).position for t in approved]
        tour = solve_tour(np.array(sites))
        order = [approved[i - 1] for i in tour[1:]]
        doc["tour"] = {"order_cluster_ids": [t.cluster_id for t in order],
                       "length_m": float(tour_length(np.array(sites), tour)),
                       "includes_return_leg": True}
        for target in order:
            cid = target.cluster_id
            try:
                sol = ik(arm, standoff_pose(target.pose_world, p.standoff_m),
                         seed_q=q)
                motion = plan_motion(arm, q, sol.q, scene.obstacles,
                                     margin=p.margin_m, step_deg=p.step_deg,
                                     max_via_attempts=p.max_via_attempts,
                                     speed_scale=p.speed_scale, seed=cid)
            except (UnreachableError, PlanFailedError) as exc:
                doc["clusters"].append({"cluster_id": cid, "error": exc.code})
                click.echo(f"cluster {cid}: {exc.code}")
                continue
            q = motion.q_goal.copy()
            doc["clusters"].append({"cluster_id": cid,
                                    "duration_s": motion.duration,
                                    "n_via": motion.n_via})
            if traj_dir is not None:
                Path(traj_dir).mkdir(parents=True, exist_ok=True)
                export_trajectory_csv(motion,
                                      Path(traj_dir) / f"cluster_{cid:03d}.csv")
            click.echo(f"cluster {cid}: {motion.duration:.2f} s, "
                       f"{motion.n_via} via")
    Path(output).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


@main.command()
@click.option("--scene", "scene_path", type=click.Path(exists=True), default=None,
              help="Scene file; omit to generate one from --scene-seed.")
@click.option("--scene-seed", type=int, default=14, show_default=True)
@click.option("--clusters", type=int, default=16, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Run seed (sensing noise, fruit set draws).")
@click.option("--concentration", type=float, default=None,
              help="Pollen suspension concentration, g/l.")
@click.option("--time-source", type=click.Choice(["budget", "trajectory"]),
              default=None)
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="Write the phase transition log as JSON lines.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--output", type=click.Path(), required=True)
def run(scene_path, scene_seed, clusters, seed, concentration, time_source,
        trace_path, config_path, output):
    """Run a full mission and write the report."""
    cfg = load_config(config_path)
    params = cfg.mission
    if concentration is not None:
        params = dataclasses.replace(params, concentration_g_per_l=concentration)
    if time_source is not None:
        params = dataclasses.replace(params, execute_time_source=time_source)
    if scene_path is not None:
        scene = Scene.load(scene_path)
    else:
        scene = generate_scene(dataclasses.replace(
            cfg.scene, seed=scene_seed, n_clusters=clusters))
    mission = Mission(scene, params, seed=seed)
    report = mission.run()
    Path(output).write_text(dump_report(report))
    if trace_path is not None:
        mission.save_trace(trace_path)
    fs = report["fruit_set"]
    click.echo(f"sprayed {fs['clusters_sprayed']}/{fs['clusters_total']} clusters, "
               f"{fs['flowers_sprayed']}/{fs['flowers_total']} flowers")
    mean = report["cycle_time"]["mean"]
    if mean:
        click.echo(f"cycle mean {mean['total_s']:.3f} s "
                   f"({report['cycle_time']['source']} timing)")
    click.echo(f"fruit set {fs['set_rate_pct']}% -> {output}")


@main.command()
@click.argument("report_path", type=click.Path(exists=True))
def report(report_path):
    """Summarize a saved mission report."""
    doc = json.loads(Path(report_path).read_text())
    if doc.get("schema") != "mission-report/1":
        raise ValueError("not a mission report")
    fs = doc["fruit_set"]
    click.echo(f"mission seed {doc['seed']}: {fs['clusters_sprayed']}"
               f"/{fs['clusters_total']} clusters sprayed, "
               f"{fs['flowers_sprayed']}/{fs['flowers_total']} flowers hit")
    tour = doc["tour"]
    if tour["length_m"] is not None:
        click.echo(f"tour {tour['length_m']:.3f} m over "
                   f"{len(tour['order_cluster_ids'])} stops (return leg included)")
    mean = doc["cycle_time"]["mean"]
    if mean:
        click.echo(
            f"cycle mean {mean['total_s']:.3f} s = acquire {mean['acquire_s']:.3f}"
            f" + estimate {mean['estimate_s']:.3f} + plan {mean['plan_s']:.3f}"
            f" + move {mean['move_s']:.3f} + spray {mean['spray_s']:.3f}")
    click.echo(f"fruit set {fs['set_rate_pct']}% of flowers"
               f" ({fs['flowers_set']}/{fs['flowers_total']})")
    tank = doc["tank"]
    click.echo(f"tank {tank['volume_ml']:.1f} ml left, "
               f"{tank['n_replacements']} replacements")


@main.command()
@click.argument("csv_path", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), default=None,
              help="Write the full analysis JSON here.")
def stats(csv_path, output):
    """Rank tests and summaries over a fruit measurement CSV."""
    records = load_records(csv_path)
    analysis = analyze_records(records)
    for metric, entry in analysis["metrics"].items():
        kw = entry.get("kruskal_wallis")
        if kw is None:
            continue
        click.echo(f"{metric}: H={kw['H']:.3f} df={kw['df']} p={kw['p_value']:.4f}")
        for pair in entry["dunn"]:
            mark = "*" if pair["p_adjusted"] < 0.05 else " "
            click.echo(f"  {pair['a']} vs {pair['b']}: z={pair['z']:+.3f} "
                       f"p_adj={pair['p_adjusted']:.4f}{mark}")
    if output is not None:
        Path(output).write_text(dump_analysis(analysis))
        click.echo(f"analysis -> {output}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=None,
              help="Defaults to $PPLN_PORT, then 8000.")
@click.option("--ui-dir", type=click.Path(), default=None,
              help="Static console bundle to serve at /ui "
                   "(defaults to $PPLN_UI_DIR, then ./frontend/dist).")
def serve(host, port, ui_dir):
    """Serve the operator console API."""
    import uvicorn

    from .service import create_app

    if port is None:
        port = int(os.environ.get("PPLN_PORT", "8000"))
    if ui_dir is None:
        ui_dir = os.environ.get("PPLN_UI_DIR", "frontend/dist")
    app = create_app(ui_dir=ui_dir if Path(ui_dir).is_dir() else None)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
