"""Pose evaluation: rotation error, reprojection distance, aggregation.

Per-sample errors:

- rotation error: geodesic angle of the relative rotation R^T R_gt,
  computed with the trace formula. For rotation matrices it equals the
  Frobenius matrix-log form (1/sqrt(2)) * ||log(R^T R_gt)||_F exactly,
  without matrix-logarithm numerics near pi.
- reprojection distance: mean pixel distance between model points
  projected under the predicted and ground-truth matrices, optionally
  normalized by the ground-truth 2D bounding-box diagonal.

Threshold accuracies count errors strictly below the threshold.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .camera import (
    BehindCamera,
    BoundingBox2D,
    DegenerateBox,
    PoseParams,
    build_projection,
    project_bbox,
    rotation_from_angles,
    _require_rotation,
)

ROTATION_ACC_THRESHOLD = math.pi / 6
ADD_ACC_THRESHOLD = 0.1


class EmptyInput(Exception):
    pass


@dataclass(frozen=True)
class EvalRecord:
    """Per-sample errors. rotation_err in radians, add_err in pixels."""

    sample_id: str
    rotation_err: float
    add_err: float
    add_err_norm: float
    bbox_diameter: float

    def __post_init__(self):
        for name in ("rotation_err", "add_err", "add_err_norm", "bbox_diameter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class EvalSummary:
    median_rotation_err: float
    mean_rotation_err: float
    acc_rotation: float       # percent with rotation_err < pi/6
    median_add_norm: float
    mean_add_norm: float
    acc_add: float            # percent with add_err_norm < 0.1
    count: int


def rotation_error(R: np.ndarray, R_gt: np.ndarray) -> float:
    """Geodesic distance between two rotations, in [0, pi] radians.

    :param R: 3x3 rotation matrix (estimate).
    :param R_gt: 3x3 rotation matrix (reference).
    """
    R = _require_rotation(R)
    R_gt = _require_rotation(R_gt)
    trace = float(np.trace(R.T @ R_gt))
    cos_angle = 0.5 * (trace - 1.0)
    return math.acos(min(1.0, max(-1.0, cos_angle)))


def add_error(P: np.ndarray, P_gt: np.ndarray, points: np.ndarray) -> float:
    """Mean pixel distance between projections of the model points.

    :param P: 3x4 projection matrix (estimate).
    :param P_gt: 3x4 projection matrix (reference).
    :param points: (N, 3) model points, N >= 1.
    """
    P = np.asarray(P, dtype=float)
    P_gt = np.asarray(P_gt, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 1 or points.shape[1] != 3:
        raise ValueError(f"points must be (N, 3) with N >= 1, got {points.shape}")
    h = points @ P[:, :3].T + P[:, 3]
    h_gt = points @ P_gt[:, :3].T + P_gt[:, 3]
    if np.any(h[:, 2] <= 0) or np.any(h_gt[:, 2] <= 0):
        raise BehindCamera("model point has non-positive depth under a projection")
    delta = h[:, :2] / h[:, 2:3] - h_gt[:, :2] / h_gt[:, 2:3]
    return float(np.mean(np.hypot(delta[:, 0], delta[:, 1])))


def normalized_add(add_err: float, gt_bbox: BoundingBox2D) -> float:
    """add_err divided by the ground-truth box diagonal."""
    diameter = gt_bbox.diameter
    if not diameter > 0:
        raise DegenerateBox(f"bounding box diameter must be positive, got {diameter}")
    return add_err / diameter


def evaluate_sample(
    sample_id: str,
    predicted: PoseParams,
    truth: PoseParams,
    points: np.ndarray,
    gt_bbox: BoundingBox2D | None = None,
) -> EvalRecord:
    """Both metrics for one prediction against its ground truth.

    gt_bbox defaults to the box of the points projected under the truth
    pose; pass the dataset RoI when one is recorded.
    """
    R = rotation_from_angles(*predicted.angles())
    R_gt = rotation_from_angles(*truth.angles())
    e_rot = rotation_error(R, R_gt)
    e_add = add_error(build_projection(predicted), build_projection(truth), points)
    if gt_bbox is None:
        gt_bbox = project_bbox(truth, np.asarray(points))
    return EvalRecord(
        sample_id=sample_id,
        rotation_err=e_rot,
        add_err=e_add,
        add_err_norm=normalized_add(e_add, gt_bbox),
        bbox_diameter=gt_bbox.diameter,
    )


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2 == 1:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def summarize(records: list[EvalRecord]) -> EvalSummary:
    """Mean/median of both errors plus strict threshold accuracies (%)."""
    if not records:
        raise EmptyInput("cannot summarize zero records")
    rot = [r.rotation_err for r in records]
    add_n = [r.add_err_norm for r in records]
    n = len(records)
    return EvalSummary(
        median_rotation_err=_median(rot),
        mean_rotation_err=sum(rot) / n,
        acc_rotation=100.0 * sum(1 for e in rot if e < ROTATION_ACC_THRESHOLD) / n,
        median_add_norm=_median(add_n),
        mean_add_norm=sum(add_n) / n,
        acc_add=100.0 * sum(1 for e in add_n if e < ADD_ACC_THRESHOLD) / n,
        count=n,
    )


def accuracy_curve(
    records: list[EvalRecord], thresholds: list[float]
) -> list[tuple[float, float]]:
    """(threshold, percent of records with add_err_norm strictly below)."""
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    if not records:
        raise EmptyInput("cannot compute a curve from zero records")
    values = sorted(r.add_err_norm for r in records)
    n = len(values)
    out = []
    for th in thresholds:
        below = np.searchsorted(values, th, side="left")  # strict: values < th
        out.append((float(th), 100.0 * below / n))
    return out


def write_report(
    out_dir,
    records: list[EvalRecord],
    thresholds: list[float] | None = None,
) -> EvalSummary:
    """Write summary.json, records.csv and curve.csv under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(records)
    (out / "summary.json").write_text(json.dumps(asdict(summary), indent=2) + "\n")
    with (out / "records.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "rotation_err", "add_err", "add_err_norm", "bbox_diameter"])
        for r in records:
            writer.writerow([r.sample_id, r.rotation_err, r.add_err, r.add_err_norm, r.bbox_diameter])
    if thresholds is None:
        thresholds = [round(0.01 * k, 2) for k in range(1, 51)]
    with (out / "curve.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "accuracy_percent"])
        for th, acc in accuracy_curve(records, thresholds):
            writer.writerow([th, acc])
    return summary
