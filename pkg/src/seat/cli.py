"""Command-line entry points: dataset generation, snapping, benchmarks, serving."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .bench import (
    BenchConfig,
    DatasetSpec,
    generate_dataset,
    robustness_sweep,
    run_benchmark,
)
from .geometry import Pose
from .objects import ASYMMETRIC_KINDS, OBJECT_KINDS
from .snap import SnapConfig, snap_pose
from .volume import load_volume


def _parse_range(text: str) -> tuple[int, int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return int(lo), int(hi)
    v = int(text)
    return v, v


def _load_bench_config(path: str | None, **overrides) -> BenchConfig:
    data = {}
    if path:
        data = json.loads(Path(path).read_text())
    data.update({k: v for k, v in overrides.items() if v is not None})
    return BenchConfig.from_dict(data)


@click.command("seat-kitgen")
@click.option("--objects", "objects_dir", type=click.Path(exists=True), default=None,
              help="Directory of source .obj meshes (defaults to the procedural library).")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--margin", type=float, default=0.0025, show_default=True)
@click.option("--kits-per-assembly", default="2..5", show_default=True, help="N or LO..HI")
@click.option("--count", type=int, default=10, show_default=True, help="Number of assemblies.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--kinds", default=",".join(ASYMMETRIC_KINDS), show_default=True,
              help="Procedural object kinds (comma separated).")
def kitgen_main(objects_dir, out_dir, margin, kits_per_assembly, count, seed, kinds):
    """Generate object-kit assemblies: kit/object OBJs plus assembly.json each."""
    lo, hi = _parse_range(kits_per_assembly)
    for k in kinds.split(","):
        if k not in OBJECT_KINDS:
            raise click.BadParameter(f"unknown object kind {k!r}")
    spec = DatasetSpec(n_assemblies=count, kits_min=lo, kits_max=hi, margin=margin,
                       object_kinds=tuple(kinds.split(",")))
    out = generate_dataset(out_dir, spec, seed=seed, objects_dir=objects_dir)
    click.echo(f"wrote {count} assemblies to {out}")


@click.command("seat-snap")
@click.option("--obs", "obs_dir", type=click.Path(exists=True), required=True,
              help="Observation directory (objects/<id>.vol, kit.vol, poses.json).")
@click.option("--object", "object_id", required=True)
@click.option("--hint", default=None, help="x,y,z,qx,qy,qz,qw (omit for uninformed search)")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
def snap_main(obs_dir, object_id, hint, config_path, seed):
    """Snap one object's goal pose against a saved observation."""
    obs = Path(obs_dir)
    cfg = SnapConfig.from_dict(json.loads(Path(config_path).read_text())) if config_path else SnapConfig()
    obj_path = obs / "objects" / f"{object_id}.vol"
    if not obj_path.exists():
        raise click.ClickException(f"no completed volume for object {object_id!r} in {obs_dir}")
    v_obj = load_volume(obj_path)
    v_kit = load_volume(obs / "kit.vol")
    poses = json.loads((obs / "poses.json").read_text())
    start = Pose.from_dict(poses[object_id])
    hint_pose = None
    if hint is not None:
        vals = [float(x) for x in hint.split(",")]
        if len(vals) != 7:
            raise click.BadParameter("--hint needs 7 comma-separated values")
        hint_pose = Pose(vals[:3], vals[3:])
    t0 = time.perf_counter()
    res = snap_pose(v_obj, v_kit, start, hint_pose, cfg, rng_seed=seed)
    out = {
        "pose": res.pose.to_dict(),
        "position_score": res.position_score,
        "n_candidates": {"positions": res.candidates_evaluated[0], "rotations": res.candidates_evaluated[1]},
        "timing_ms": (time.perf_counter() - t0) * 1e3,
    }
    click.echo(json.dumps(out, indent=2))


@click.group("seat-bench")
def bench_main():
    """Benchmark harness: dataset generation, runs and robustness sweeps."""


@bench_main.command("gen")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--count", type=int, default=50, show_default=True)
@click.option("--kits-per-assembly", default="1..1", show_default=True)
@click.option("--margin", type=float, default=0.0025, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--objects", "objects_dir", type=click.Path(exists=True), default=None)
@click.option("--identical-pairs", is_flag=True, default=False,
              help="Every assembly repeats one object (ambiguity suites).")
def bench_gen(out_dir, count, kits_per_assembly, margin, seed, objects_dir, identical_pairs):
    lo, hi = _parse_range(kits_per_assembly)
    spec = DatasetSpec(n_assemblies=count, kits_min=lo, kits_max=hi, margin=margin,
                       identical_pairs=identical_pairs)
    out = generate_dataset(out_dir, spec, seed=seed, objects_dir=objects_dir)
    click.echo(f"dataset at {out}")


@bench_main.command("run")
@click.option("--dataset", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--completion", type=str, default=None, help="Override completion mode.")
@click.option("--uninformed", is_flag=True, default=False)
def bench_run(dataset, config_path, out_dir, seed, completion, uninformed):
    cfg = _load_bench_config(config_path, completion=completion)
    if uninformed:
        import dataclasses

        cfg = dataclasses.replace(cfg, informed=False)
    records, summary = run_benchmark(dataset, cfg, seed=seed, out_dir=out_dir)
    click.echo(json.dumps({k: summary[k] for k in ("n_records", "delta_pos", "delta_rot", "success_rate")}, indent=2))


@bench_main.command("sweep")
@click.option("--dataset", type=click.Path(exists=True), required=True)
@click.option("--axis", type=click.Choice(["position", "rotation"]), required=True)
@click.option("--bins", required=True, help="Comma-separated bin magnitudes (m or rad).")
@click.option("--fixed-other", type=float, required=True, help="Fixed error on the other axis.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
def bench_sweep(dataset, axis, bins, fixed_other, config_path, out_dir, seed):
    cfg = _load_bench_config(config_path)
    bin_vals = [float(b) for b in bins.split(",")]
    table = robustness_sweep(dataset, axis, bin_vals, fixed_other, cfg, seed=seed, out_dir=out_dir)
    click.echo(json.dumps(table, indent=2))


@click.command("seat-serve")
@click.option("--dataset", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--completion", type=click.Choice(["oracle", "extrude_ground", "visual_hull"]),
              default="oracle", show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(exists=True), default=None,
              help="Static UI bundle to serve at / (e.g. frontend/dist).")
def serve_main(dataset, port, host, completion, ui_dir):
    """Serve the teleoperation HTTP API (and the scene-editor UI if built)."""
    import uvicorn

    from .service import create_app

    app = create_app(dataset_dir=dataset, completion=completion, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(bench_main())
