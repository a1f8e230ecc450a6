"""Annotation records, dataset manifests, splits, and pose statistics.

Annotations persist as an append-only JSON-lines log, one record per
line, materialized with last-revision-wins. The log is diffable and
survives crashes mid-write (a torn final line is dropped on load).
Writes are optimistic: a stale revision is rejected so two annotators
cannot silently overwrite each other.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .camera import BehindCamera, PoseParams, project_bbox

STATUSES = ("unannotated", "annotated", "flagged", "approved")

# unannotated -> annotated -> {flagged -> annotated}* -> approved
_TRANSITIONS = {
    "unannotated": {"annotated"},
    "annotated": {"flagged", "approved"},
    "flagged": {"annotated"},
    "approved": set(),
}


class DatasetError(Exception):
    pass


class MissingSplitTag(DatasetError):
    pass


class StaleRevision(DatasetError):
    def __init__(self, image_id: str, expected: int, got: int):
        super().__init__(
            f"record {image_id} is at revision {expected}, write supplied {got}"
        )
        self.expected = expected
        self.got = got


class UnknownImage(DatasetError):
    pass


class InvalidTransition(DatasetError):
    pass


class EmptyInput(DatasetError):
    pass


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    image_path: str
    category: str
    model_id: str
    pose: PoseParams | None
    status: str = "unannotated"
    annotator: str = ""
    updated_at: str = ""
    revision: int = 0

    def __post_init__(self):
        if self.status not in STATUSES:
            raise DatasetError(f"unknown status {self.status!r}")
        if self.status != "unannotated" and self.pose is None:
            raise DatasetError(f"status {self.status!r} requires a pose")

    def to_json(self) -> str:
        # repr-based floats: shortest representation that parses back bit-exact
        pose = self.pose.to_dict() if self.pose is not None else None
        return json.dumps(
            {
                "image_id": self.image_id,
                "image_path": self.image_path,
                "category": self.category,
                "model_id": self.model_id,
                "pose": pose,
                "status": self.status,
                "annotator": self.annotator,
                "updated_at": self.updated_at,
                "revision": self.revision,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "AnnotationRecord":
        obj = json.loads(line)
        pose = PoseParams.from_dict(obj["pose"]) if obj.get("pose") else None
        return cls(
            image_id=obj["image_id"],
            image_path=obj["image_path"],
            category=obj["category"],
            model_id=obj["model_id"],
            pose=pose,
            status=obj.get("status", "unannotated"),
            annotator=obj.get("annotator", ""),
            updated_at=obj.get("updated_at", ""),
            revision=int(obj.get("revision", 0)),
        )


def can_transition(current: str, target: str) -> bool:
    return target in _TRANSITIONS.get(current, set())


class AnnotationStore:
    """Append-only record log with single-writer optimistic concurrency.

    Concurrent readers are safe; writes serialize on an internal lock and
    are atomic per record. A write must supply the revision it read; a
    mismatch raises StaleRevision and changes nothing.
    """

    def __init__(self, path):
        self._path = Path(path)
        self._lock = threading.Lock()
        self._records: dict[str, AnnotationRecord] = {}
        if self._path.exists():
            for line in self._path.read_text().splitlines():
                line = line.strip()
                if not line:
                    continue
                try:
                    record = AnnotationRecord.from_json(line)
                except (json.JSONDecodeError, KeyError):
                    continue  # torn trailing line from a crashed writer
                current = self._records.get(record.image_id)
                if current is None or record.revision >= current.revision:
                    self._records[record.image_id] = record

    def seed(self, record: AnnotationRecord) -> None:
        """Register an image without writing to the log (manifest import)."""
        with self._lock:
            self._records.setdefault(record.image_id, record)

    def get(self, image_id: str) -> AnnotationRecord:
        record = self._records.get(image_id)
        if record is None:
            raise UnknownImage(f"no record for image {image_id!r}")
        return record

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._records

    def list(self, status: str | None = None) -> list[AnnotationRecord]:
        records = sorted(self._records.values(), key=lambda r: r.image_id)
        if status is None:
            return records
        if status not in STATUSES:
            raise DatasetError(f"unknown status {status!r}")
        return [r for r in records if r.status == status]

    def put_pose(
        self, image_id: str, pose: PoseParams, revision: int, annotator: str = ""
    ) -> AnnotationRecord:
        """Save a pose; moves unannotated -> annotated, and a revised pose
        on a flagged record back to annotated (second-round revision)."""
        with self._lock:
            current = self.get(image_id)
            if revision != current.revision:
                raise StaleRevision(image_id, current.revision, revision)
            if current.status == "approved":
                raise InvalidTransition("approved records are frozen")
            status = "annotated" if current.status in ("unannotated", "flagged") else current.status
            updated = replace(
                current,
                pose=pose,
                status=status,
                annotator=annotator or current.annotator,
                updated_at=utc_now(),
                revision=current.revision + 1,
            )
            self._append(updated)
            self._records[image_id] = updated
            return updated

    def set_status(self, image_id: str, status: str, annotator: str = "") -> AnnotationRecord:
        with self._lock:
            current = self.get(image_id)
            if not can_transition(current.status, status):
                raise InvalidTransition(
                    f"cannot move {image_id} from {current.status!r} to {status!r}"
                )
            updated = replace(
                current,
                status=status,
                annotator=annotator or current.annotator,
                updated_at=utc_now(),
                revision=current.revision + 1,
            )
            self._append(updated)
            self._records[image_id] = updated
            return updated

    def _append(self, record: AnnotationRecord) -> None:
        with self._path.open("a") as fh:
            fh.write(record.to_json() + "\n")


@dataclass(frozen=True)
class ImageEntry:
    image_id: str
    path: str
    category: str
    split: str | None = None
    width: int | None = None
    height: int | None = None


@dataclass(frozen=True)
class CategoryEntry:
    model_id: str
    exact_match: bool = True


@dataclass(frozen=True)
class DatasetManifest:
    """Images, categories and mesh paths for one dataset."""

    name: str
    images: tuple[ImageEntry, ...]
    categories: dict[str, CategoryEntry]
    models: dict[str, str]  # model_id -> mesh path

    def __post_init__(self):
        for image in self.images:
            entry = self.categories.get(image.category)
            if entry is None:
                raise DatasetError(
                    f"image {image.image_id!r} has category {image.category!r} "
                    "with no category entry"
                )
            if entry.model_id not in self.models:
                raise DatasetError(
                    f"category {image.category!r} maps to unknown model {entry.model_id!r}"
                )

    def model_for_category(self, category: str) -> str:
        return self.categories[category].model_id

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        obj = json.loads(text)
        images = tuple(
            ImageEntry(
                image_id=e["image_id"],
                path=e["path"],
                category=e["category"],
                split=e.get("split"),
                width=e.get("width"),
                height=e.get("height"),
            )
            for e in obj["images"]
        )
        categories = {
            name: CategoryEntry(model_id=c["model_id"], exact_match=c.get("exact_match", True))
            for name, c in obj["categories"].items()
        }
        return cls(
            name=obj.get("name", ""),
            images=images,
            categories=categories,
            models=dict(obj["models"]),
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "images": [
                    {
                        "image_id": e.image_id,
                        "path": e.path,
                        "category": e.category,
                        **({"split": e.split} if e.split else {}),
                        **({"width": e.width} if e.width else {}),
                        **({"height": e.height} if e.height else {}),
                    }
                    for e in self.images
                ],
                "categories": {
                    name: {"model_id": c.model_id, "exact_match": c.exact_match}
                    for name, c in self.categories.items()
                },
                "models": self.models,
            },
            indent=2,
        )

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


def split_standard(manifest: DatasetManifest) -> tuple[list[ImageEntry], list[ImageEntry]]:
    """Partition by the per-image predefined split tag."""
    train, test = [], []
    for image in manifest.images:
        if image.split == "train":
            train.append(image)
        elif image.split == "test":
            test.append(image)
        elif image.split is None:
            raise MissingSplitTag(f"image {image.image_id!r} has no split tag")
        else:
            raise DatasetError(f"image {image.image_id!r} has unknown split {image.split!r}")
    return train, test


def split_random(
    manifest: DatasetManifest, fraction: float, seed: int = 0
) -> tuple[list[ImageEntry], list[ImageEntry]]:
    """Deterministic random partition with ceil(fraction * N) training images."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    images = list(manifest.images)
    n = len(images)
    n_train = math.ceil(fraction * n)
    order = np.random.default_rng(seed).permutation(n)
    train_idx = set(order[:n_train].tolist())
    train = [img for i, img in enumerate(images) if i in train_idx]
    test = [img for i, img in enumerate(images) if i not in train_idx]
    return train, test


@dataclass(frozen=True)
class AngleHistogram:
    name: str
    edges: np.ndarray   # bins + 1 edges, radians
    counts: np.ndarray  # per-bin counts


def pose_histograms(records: list[AnnotationRecord], bins: int = 24) -> list[AngleHistogram]:
    """Angular histograms of azimuth, elevation and theta, polar-plot ready."""
    annotated = [r for r in records if r.pose is not None]
    if not annotated:
        raise EmptyInput("no annotated records")
    out = []
    specs = [
        ("azimuth", [r.pose.azimuth for r in annotated], (0.0, 2 * math.pi)),
        ("elevation", [r.pose.elevation for r in annotated], (-math.pi, math.pi)),
        ("theta", [r.pose.theta for r in annotated], (-math.pi, math.pi)),
    ]
    for name, values, rng in specs:
        counts, edges = np.histogram(values, bins=bins, range=rng)
        out.append(AngleHistogram(name=name, edges=edges, counts=counts))
    return out


def write_histograms_csv(histograms: list[AngleHistogram], path) -> None:
    import csv

    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["angle", "bin_start", "bin_end", "count"])
        for hist in histograms:
            for i, count in enumerate(hist.counts):
                writer.writerow([hist.name, hist.edges[i], hist.edges[i + 1], int(count)])


@dataclass(frozen=True)
class ValidationConfig:
    min_inside_fraction: float = 0.25   # of the projected box area inside the image
    depth_prior: tuple[float, float] = (0.5, 200.0)
    focal_prior: tuple[float, float] = (50.0, 20000.0)


def validate_record(
    record: AnnotationRecord,
    mesh,
    image_size: tuple[int, int],
    config: ValidationConfig | None = None,
) -> list[str]:
    """Quality-check findings for one annotation. Empty list means clean."""
    if config is None:
        config = ValidationConfig()
    findings: list[str] = []
    pose = record.pose
    if pose is None:
        return ["no pose annotated"]
    if not (config.depth_prior[0] <= pose.depth <= config.depth_prior[1]):
        findings.append(
            f"depth {pose.depth:.4g} outside prior [{config.depth_prior[0]}, {config.depth_prior[1]}]"
        )
    if not (config.focal_prior[0] <= pose.focal <= config.focal_prior[1]):
        findings.append(
            f"focal {pose.focal:.4g} outside prior [{config.focal_prior[0]}, {config.focal_prior[1]}]"
        )
    try:
        box = project_bbox(pose, mesh)
    except BehindCamera:
        findings.append("model vertices behind the camera")
        return findings
    width, height = image_size
    ix0 = max(box.min_x, 0.0)
    iy0 = max(box.min_y, 0.0)
    ix1 = min(box.max_x, float(width))
    iy1 = min(box.max_y, float(height))
    inside = max(0.0, ix1 - ix0) * max(0.0, iy1 - iy0)
    fraction = inside / (box.width * box.height)
    if fraction < config.min_inside_fraction:
        findings.append(
            f"projection only {100 * fraction:.1f}% inside the {width}x{height} image"
        )
    return findings
