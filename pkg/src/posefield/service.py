"""HTTP API backing the annotation UI.

Serves images, decimated meshes, annotation reads/writes with optimistic
concurrency, server-side silhouette renders for pixel-truth comparison,
pose statistics, and canonical projection test vectors that clients use
to prove their camera math agrees with the server's.
"""

from __future__ import annotations

import io
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import camera, dataset, field, mesh as mesh_mod
from .camera import PoseParams

CLIENT_MESH_TRIANGLE_BUDGET = 5000
TESTVECTOR_COUNT = 100


class ServiceError(Exception):
    pass


@dataclass(frozen=True)
class ServiceConfig:
    data_root: Path
    manifest_path: Path
    static_path: Path | None = None
    host: str = "127.0.0.1"
    port: int = 8008
    render_cache_size: int = 32

    def __post_init__(self):
        object.__setattr__(self, "data_root", Path(self.data_root))
        object.__setattr__(self, "manifest_path", Path(self.manifest_path))
        if not self.data_root.is_dir():
            raise ServiceError(f"data root {self.data_root} does not exist")
        if not self.manifest_path.is_file():
            raise ServiceError(f"manifest {self.manifest_path} does not exist")
        if self.static_path is not None:
            object.__setattr__(self, "static_path", Path(self.static_path))
            if not self.static_path.is_dir():
                raise ServiceError(f"static path {self.static_path} does not exist")
        if self.render_cache_size < 0:
            raise ServiceError("render cache size must be non-negative")


class PosePayload(BaseModel):
    azimuth: float
    elevation: float
    theta: float
    depth: float
    focal: float
    u: float
    v: float


class AnnotationPut(BaseModel):
    pose: PosePayload
    revision: int
    annotator: str = ""


class StatusPost(BaseModel):
    status: str
    annotator: str = ""


class _RenderCache:
    def __init__(self, capacity: int):
        self._capacity = capacity
        self._items: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            if key in self._items:
                self._items.move_to_end(key)
                return self._items[key]
        return None

    def put(self, key, value):
        if self._capacity == 0:
            return
        with self._lock:
            self._items[key] = value
            self._items.move_to_end(key)
            while len(self._items) > self._capacity:
                self._items.popitem(last=False)


def _pose_cache_key(pose: PoseParams):
    return tuple(round(v, 9) for v in pose.to_dict().values())


def _record_json(record: dataset.AnnotationRecord) -> dict:
    return {
        "image_id": record.image_id,
        "image_path": record.image_path,
        "category": record.category,
        "model_id": record.model_id,
        "pose": record.pose.to_dict() if record.pose else None,
        "status": record.status,
        "annotator": record.annotator,
        "updated_at": record.updated_at,
        "revision": record.revision,
    }


def _parse_pose(payload: PosePayload) -> PoseParams:
    try:
        return PoseParams(**payload.model_dump())
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=f"invalid pose: {exc}") from exc


def make_test_vectors(count: int = TESTVECTOR_COUNT, seed: int = 20240601) -> list[dict]:
    """Canonical pose -> projection vectors for client conformance checks."""
    rng = np.random.default_rng(seed)
    points = np.array(
        [[x, y, z] for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)]
        + [[0.0, 0.0, 0.0], [0.25, 0.0, 0.0], [0.0, 0.25, 0.0], [0.0, 0.0, 0.25]]
    )
    vectors = []
    for _ in range(count):
        pose = PoseParams(
            azimuth=rng.uniform(0, 2 * math.pi),
            elevation=rng.uniform(-math.pi / 3, math.pi / 3),
            theta=rng.uniform(-0.5, 0.5),
            depth=math.exp(rng.uniform(math.log(2.0), math.log(50.0))),
            focal=math.exp(rng.uniform(math.log(300.0), math.log(5000.0))),
            u=rng.uniform(0.0, 1024.0),
            v=rng.uniform(0.0, 1024.0),
        )
        pixels = camera.project_points(pose, points)
        vectors.append(
            {
                "pose": pose.to_dict(),
                "points": points.tolist(),
                "pixels": pixels.tolist(),
            }
        )
    return vectors


def create_app(config: ServiceConfig) -> FastAPI:
    manifest = dataset.DatasetManifest.load(config.manifest_path)
    store = dataset.AnnotationStore(config.data_root / "annotations.jsonl")
    for image in manifest.images:
        if image.image_id not in store:
            store.seed(
                dataset.AnnotationRecord(
                    image_id=image.image_id,
                    image_path=image.path,
                    category=image.category,
                    model_id=manifest.model_for_category(image.category),
                    pose=None,
                )
            )

    image_entries = {image.image_id: image for image in manifest.images}
    mesh_cache: dict[str, mesh_mod.TriangleMesh] = {}
    mesh_lock = threading.Lock()
    render_cache = _RenderCache(config.render_cache_size)
    test_vectors = make_test_vectors()

    def load_model(model_id: str) -> mesh_mod.TriangleMesh:
        with mesh_lock:
            if model_id not in mesh_cache:
                rel = manifest.models.get(model_id)
                if rel is None:
                    raise HTTPException(status_code=404, detail=f"unknown model {model_id!r}")
                path = config.data_root / rel
                if not path.is_file():
                    raise HTTPException(status_code=404, detail=f"mesh file missing for {model_id!r}")
                mesh_cache[model_id] = mesh_mod.normalize_mesh(
                    mesh_mod.load_mesh_file(path, model_id=model_id)
                )
            return mesh_cache[model_id]

    def image_size(image_id: str) -> tuple[int, int]:
        entry = image_entries[image_id]
        if entry.width and entry.height:
            return entry.width, entry.height
        from PIL import Image

        with Image.open(config.data_root / entry.path) as img:
            return img.size

    app = FastAPI(title="pose annotation service")

    @app.get("/api/images")
    def list_images(status: str | None = Query(default=None)):
        try:
            records = store.list(status)
        except dataset.DatasetError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"images": [_record_json(r) for r in records]}

    @app.get("/api/images/{image_id}/file")
    def image_file(image_id: str):
        if image_id not in store:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        path = config.data_root / image_entries[image_id].path
        if not path.is_file():
            raise HTTPException(status_code=404, detail="image file missing")
        return FileResponse(path)

    @app.get("/api/models/{model_id}/mesh.json")
    def model_mesh(model_id: str):
        m = mesh_mod.decimate_mesh(load_model(model_id), CLIENT_MESH_TRIANGLE_BUDGET)
        return {
            "model_id": model_id,
            "vertices": m.vertices.tolist(),
            "triangles": m.triangles.tolist(),
        }

    @app.get("/api/annotations/{image_id}")
    def get_annotation(image_id: str):
        try:
            return _record_json(store.get(image_id))
        except dataset.UnknownImage as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.put("/api/annotations/{image_id}")
    def put_annotation(image_id: str, body: AnnotationPut):
        pose = _parse_pose(body.pose)
        try:
            record = store.put_pose(image_id, pose, body.revision, body.annotator)
        except dataset.UnknownImage as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (dataset.StaleRevision, dataset.InvalidTransition) as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return _record_json(record)

    @app.post("/api/annotations/{image_id}/status")
    def post_status(image_id: str, body: StatusPost):
        if body.status not in dataset.STATUSES:
            raise HTTPException(status_code=400, detail=f"unknown status {body.status!r}")
        try:
            record = store.set_status(image_id, body.status, body.annotator)
        except dataset.UnknownImage as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except dataset.InvalidTransition as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return _record_json(record)

    @app.get("/api/render")
    def render(
        image_id: str,
        azimuth: float,
        elevation: float,
        theta: float,
        depth: float,
        focal: float,
        u: float,
        v: float,
    ):
        if image_id not in store:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        try:
            pose = PoseParams(azimuth, elevation, theta, depth, focal, u, v)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=f"invalid pose: {exc}") from exc
        key = (image_id, _pose_cache_key(pose))
        cached = render_cache.get(key)
        if cached is not None:
            return Response(content=cached, media_type="image/png")
        record = store.get(image_id)
        m = load_model(record.model_id)
        width, height = image_size(image_id)
        mask = field.rasterize_field(m, pose, width, height).mask
        png = _mask_to_png(mask)
        render_cache.put(key, png)
        return Response(content=png, media_type="image/png")

    @app.get("/api/stats")
    def stats():
        annotated = [r for r in store.list() if r.pose is not None]
        if not annotated:
            return {"count": 0, "histograms": []}
        hists = dataset.pose_histograms(annotated)
        return {
            "count": len(annotated),
            "histograms": [
                {"angle": h.name, "edges": h.edges.tolist(), "counts": h.counts.tolist()}
                for h in hists
            ],
        }

    @app.get("/api/testvectors")
    def testvectors():
        return {"vectors": test_vectors, "tolerance_px": 0.5}

    if config.static_path is not None:
        app.mount("/", StaticFiles(directory=config.static_path, html=True), name="static")

    return app


def _mask_to_png(mask: np.ndarray) -> bytes:
    from PIL import Image

    rgba = np.zeros((*mask.shape, 4), dtype=np.uint8)
    rgba[mask] = (255, 64, 64, 160)  # translucent silhouette, transparent elsewhere
    buf = io.BytesIO()
    Image.fromarray(rgba, "RGBA").save(buf, format="PNG")
    return buf.getvalue()


def run(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
