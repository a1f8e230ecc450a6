"""Command-line entry points.

    posefield generate-synthetic   build a synthetic pose/field corpus
    posefield solve                recover poses from field files
    posefield evaluate             score predictions against ground truth
    posefield serve                run the annotation HTTP service
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import field, mesh as mesh_mod, metrics, solver
from .camera import BoundingBox2D, PoseParams


@click.group()
def main():
    """Perspective pose toolkit: synthetic fields, pose solving, evaluation."""


def _load_meshes(meshes_dir: Path) -> list[mesh_mod.TriangleMesh]:
    paths = sorted(meshes_dir.glob("*.obj"))
    if not paths:
        raise click.ClickException(f"no .obj meshes found in {meshes_dir}")
    return [mesh_mod.normalize_mesh(mesh_mod.load_mesh_file(p)) for p in paths]


@main.command("generate-synthetic")
@click.option("--meshes", "meshes_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--count", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--field-size", type=int, default=56, show_default=True)
@click.option("--frame-size", type=int, default=512, show_default=True)
@click.option("--full-frame", is_flag=True, help="Keep fields at frame resolution instead of cropping to the RoI.")
@click.option("--workers", type=int, default=1, show_default=True)
def generate_synthetic(meshes_dir, count, seed, out_dir, field_size, frame_size, full_frame, workers):
    """Rasterize synthetic location fields with sampled poses."""
    meshes = _load_meshes(meshes_dir)
    config = field.PoseSamplerConfig(frame_width=frame_size, frame_height=frame_size)
    sink = field.DirectorySink(out_dir)
    try:
        entries = field.generate_corpus(
            meshes, count, config, sink,
            seed=seed, field_size=field_size, crop_to_roi=not full_frame, workers=workers,
        )
    except field.FieldError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {len(entries)} samples to {out_dir}")


@main.command("solve")
@click.option("--fields", "fields_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--max-correspondences", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def solve_cmd(fields_dir, out_path, max_correspondences, seed):
    """Solve every field file in a directory; one prediction line each."""
    opts = solver.SolveOptions(max_correspondences=max_correspondences, seed=seed)
    model_ids = {}
    manifest_path = fields_dir / "manifest.jsonl"
    if manifest_path.is_file():
        for line in manifest_path.read_text().splitlines():
            if line.strip():
                entry = field.SyntheticSample.from_json(line)
                model_ids[entry.sample_id] = entry.model_id
    failures = 0
    lines = []
    for path in sorted(fields_dir.glob("*.lf3d")):
        sample_id = path.stem
        try:
            f = field.read_field_file(path)
            result = solver.solve_pose(f, opts)
            lines.append(
                json.dumps(
                    {
                        "sample_id": sample_id,
                        "model_id": model_ids.get(sample_id, ""),
                        "pose": result.pose.to_dict(),
                        "rms_residual": result.rms_residual,
                        "init_source": result.init_source,
                    }
                )
            )
        except (field.FieldError, solver.SolverError) as exc:
            failures += 1
            lines.append(
                json.dumps(
                    {"sample_id": sample_id, "error": f"{type(exc).__name__}: {exc}"}
                )
            )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("".join(line + "\n" for line in lines))
    click.echo(f"solved {len(lines) - failures}/{len(lines)} fields -> {out_path}")
    if failures:
        sys.exit(1)


def _read_jsonl(path: Path) -> list[dict]:
    out = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line:
            out.append(json.loads(line))
    return out


@main.command("evaluate")
@click.option("--pred", "pred_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--gt", "gt_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--meshes", "meshes_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--report", "report_dir", type=click.Path(path_type=Path), required=True)
@click.option("--max-points", type=int, default=5000, show_default=True,
              help="Model points per sample for the distance metric.")
def evaluate_cmd(pred_path, gt_path, meshes_dir, report_dir, max_points):
    """Join predictions with ground truth and write the metric report."""
    truths = {}
    for obj in _read_jsonl(gt_path):
        truths[obj["sample_id"]] = obj
    meshes = {}
    points_cache = {}

    def points_for(model_id: str) -> np.ndarray:
        if model_id not in points_cache:
            if model_id not in meshes:
                path = meshes_dir / f"{model_id}.obj"
                if not path.is_file():
                    raise click.ClickException(f"mesh file {path} not found")
                meshes[model_id] = mesh_mod.normalize_mesh(mesh_mod.load_mesh_file(path))
            points_cache[model_id] = mesh_mod.sample_points(meshes[model_id], max_points, seed=0)
        return points_cache[model_id]

    records = []
    unmatched = 0
    skipped = 0
    for obj in _read_jsonl(pred_path):
        sample_id = obj["sample_id"]
        if "error" in obj:
            skipped += 1
            continue
        gt = truths.get(sample_id)
        if gt is None:
            unmatched += 1
            click.echo(f"warning: no ground truth for {sample_id}", err=True)
            continue
        model_id = gt.get("model_id") or obj.get("model_id", "")
        predicted = PoseParams.from_dict(obj["pose"])
        truth = PoseParams.from_dict(gt["pose"])
        points = points_for(model_id)
        gt_bbox = BoundingBox2D.from_list(gt["roi"]) if "roi" in gt else None
        records.append(metrics.evaluate_sample(sample_id, predicted, truth, points, gt_bbox))
    if unmatched:
        click.echo(f"warning: {unmatched} prediction(s) had no ground truth", err=True)
    if skipped:
        click.echo(f"note: {skipped} prediction(s) carried solver errors", err=True)
    if not records:
        raise click.ClickException("no evaluable samples")
    summary = metrics.write_report(report_dir, records)
    click.echo(json.dumps(
        {
            "count": summary.count,
            "median_rotation_err_deg": math.degrees(summary.median_rotation_err),
            "mean_rotation_err_deg": math.degrees(summary.mean_rotation_err),
            "acc_rotation_pct": summary.acc_rotation,
            "median_add_norm": summary.median_add_norm,
            "mean_add_norm": summary.mean_add_norm,
            "acc_add_pct": summary.acc_add,
        },
        indent=2,
    ))


@main.command("serve")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--data-root", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--static", "static_path", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8008, show_default=True)
@click.option("--render-cache-size", type=int, default=32, show_default=True)
def serve_cmd(manifest_path, data_root, static_path, host, port, render_cache_size):
    """Run the annotation HTTP service."""
    from . import service

    try:
        config = service.ServiceConfig(
            data_root=data_root,
            manifest_path=manifest_path,
            static_path=static_path,
            host=host,
            port=port,
            render_cache_size=render_cache_size,
        )
    except service.ServiceError as exc:
        raise click.ClickException(str(exc))
    service.run(config)


if __name__ == "__main__":
    main()
