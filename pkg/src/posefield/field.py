"""Location fields: per-pixel model-surface coordinates with a foreground mask.

A field is the same size as its image; each foreground pixel stores the
(X, Y, Z) model coordinates of the surface point visible there, background
pixels are exactly (0, 0, 0). Fields encode geometry only -- no shading,
texture or lighting is ever computed -- so synthetically generated fields
are drawn from the same distribution as fields derived from annotations.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from .camera import NEAR_PLANE, BoundingBox2D, PoseParams, project_bbox, rotation_from_angles
from .mesh import TriangleMesh

MAGIC = b"LF3D"
FORMAT_VERSION = 1


class FieldError(Exception):
    pass


class EmptyCrop(FieldError):
    """The crop region contains no foreground pixels."""


class BadMagic(FieldError):
    pass


class TruncatedPayload(FieldError):
    pass


class BadConfig(FieldError):
    pass


@dataclass
class LocationField:
    """H x W x 3 float32 surface coordinates plus an H x W boolean mask."""

    coords: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        coords = np.ascontiguousarray(np.asarray(self.coords, dtype=np.float32))
        mask = np.ascontiguousarray(np.asarray(self.mask, dtype=bool))
        if coords.ndim != 3 or coords.shape[2] != 3:
            raise FieldError(f"coords must be (H, W, 3), got {coords.shape}")
        if mask.shape != coords.shape[:2]:
            raise FieldError(f"mask shape {mask.shape} does not match coords {coords.shape[:2]}")
        coords[~mask] = 0.0  # background is exactly zero by construction
        self.coords = coords
        self.mask = mask

    @property
    def height(self) -> int:
        return self.coords.shape[0]

    @property
    def width(self) -> int:
        return self.coords.shape[1]

    def foreground_count(self) -> int:
        return int(self.mask.sum())

    def __eq__(self, other):
        if not isinstance(other, LocationField):
            return NotImplemented
        return (
            self.coords.shape == other.coords.shape
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.mask, other.mask)
        )


def rasterize_field(
    mesh: TriangleMesh,
    pose: PoseParams,
    width: int,
    height: int,
    near: float = NEAR_PLANE,
) -> LocationField:
    """Z-buffered rasterization of the mesh into a location field.

    Pixels are sampled at their centers (x + 0.5, y + 0.5). Covered pixels
    store the perspective-correct interpolation of the nearest triangle's
    model-space vertex coordinates; the depth test runs on camera-frame z.
    Perspective-correct interpolation (attribute/z and 1/z interpolated
    linearly in screen space) is required: affine interpolation puts the
    stored point visibly off the viewing ray under strong perspective.

    Triangles touching the near plane are dropped rather than clipped; a
    mesh fully behind the camera yields an all-background field. Depth
    ties go to the lowest triangle index, which makes the output
    deterministic under any triangle ordering.
    """
    if width < 1 or height < 1:
        raise ValueError(f"field size must be positive, got {width}x{height}")
    R = rotation_from_angles(*pose.angles())
    cam = mesh.vertices @ R.T
    cam[:, 2] += pose.depth
    z = cam[:, 2]

    coords = np.zeros((height, width, 3), dtype=np.float32)
    mask = np.zeros((height, width), dtype=bool)
    zbuf = np.full((height, width), np.inf)

    in_front = z > near
    if not np.any(in_front):
        return LocationField(coords, mask)

    z_safe = np.where(in_front, z, 1.0)
    sx = pose.focal * cam[:, 0] / z_safe + pose.u
    sy = pose.focal * cam[:, 1] / z_safe + pose.v
    inv_z = 1.0 / z_safe

    model = mesh.vertices
    for tri in mesh.triangles:
        i, j, k = int(tri[0]), int(tri[1]), int(tri[2])
        if not (in_front[i] and in_front[j] and in_front[k]):
            continue
        x0, y0, x1, y1, x2, y2 = sx[i], sy[i], sx[j], sy[j], sx[k], sy[k]
        # signed doubled area of the screen triangle
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        lo_x = max(0, math.ceil(min(x0, x1, x2) - 0.5))
        hi_x = min(width - 1, math.floor(max(x0, x1, x2) - 0.5))
        lo_y = max(0, math.ceil(min(y0, y1, y2) - 0.5))
        hi_y = min(height - 1, math.floor(max(y0, y1, y2) - 0.5))
        if lo_x > hi_x or lo_y > hi_y:
            continue
        px = np.arange(lo_x, hi_x + 1) + 0.5
        py = (np.arange(lo_y, hi_y + 1) + 0.5)[:, None]
        # barycentric coordinates from edge functions, normalized by area
        w0 = ((x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)) / area
        w1 = ((x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not inside.any():
            continue
        interp_inv_z = w0 * inv_z[i] + w1 * inv_z[j] + w2 * inv_z[k]
        with np.errstate(divide="ignore"):
            depth = np.where(interp_inv_z > 0.0, 1.0 / interp_inv_z, np.inf)
        patch = zbuf[lo_y : hi_y + 1, lo_x : hi_x + 1]
        # strict test keeps the lowest triangle index on exact depth ties
        wins = inside & (depth < patch)
        if not wins.any():
            continue
        surf = (
            (w0 * inv_z[i])[..., None] * model[i]
            + (w1 * inv_z[j])[..., None] * model[j]
            + (w2 * inv_z[k])[..., None] * model[k]
        ) * depth[..., None]
        patch[wins] = depth[wins]
        block = coords[lo_y : hi_y + 1, lo_x : hi_x + 1]
        block[wins] = surf[wins]
        mask[lo_y : hi_y + 1, lo_x : hi_x + 1] |= wins
    return LocationField(coords, mask)


def silhouette_mask(
    mesh: TriangleMesh,
    pose: PoseParams,
    width: int,
    height: int,
    near: float = NEAR_PLANE,
) -> np.ndarray:
    """Coverage-only oracle: point-in-triangle tests, no z-buffer.

    Computed per pixel over every triangle with sign tests against all
    three edges, deliberately independent of the incremental rasterizer.
    """
    R = rotation_from_angles(*pose.angles())
    cam = mesh.vertices @ R.T
    cam[:, 2] += pose.depth
    z = cam[:, 2]
    in_front = z > near
    out = np.zeros((height, width), dtype=bool)
    px = np.arange(width) + 0.5
    py = (np.arange(height) + 0.5)[:, None]
    for tri in mesh.triangles:
        i, j, k = (int(t) for t in tri)
        if not (in_front[i] and in_front[j] and in_front[k]):
            continue
        pts = [
            (pose.focal * cam[t, 0] / z[t] + pose.u, pose.focal * cam[t, 1] / z[t] + pose.v)
            for t in (i, j, k)
        ]
        (ax, ay), (bx, by), (cx, cy) = pts
        d1 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        d2 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
        d3 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
        neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
        pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
        out |= ~(neg & pos)
    return out


def crop_resize_field(field: LocationField, roi: BoundingBox2D, out_size: int) -> LocationField:
    """Nearest-neighbor crop of the RoI resampled to out_size x out_size.

    Coordinate values are copied from source pixels, never blended, so
    foreground values stay on the model surface and the mask boundary
    stays crisp. Output pixels mapping outside the field are background.
    """
    if out_size < 1:
        raise ValueError(f"out_size must be positive, got {out_size}")
    sx0, sy0 = roi.min_x, roi.min_y
    w, h = roi.width, roi.height
    if roi.max_x <= 0 or roi.max_y <= 0 or sx0 >= field.width or sy0 >= field.height:
        raise EmptyCrop("crop region does not overlap the field")
    xs = np.floor(sx0 + (np.arange(out_size) + 0.5) * (w / out_size)).astype(np.int64)
    ys = np.floor(sy0 + (np.arange(out_size) + 0.5) * (h / out_size)).astype(np.int64)
    valid_x = (xs >= 0) & (xs < field.width)
    valid_y = (ys >= 0) & (ys < field.height)
    xs_c = np.clip(xs, 0, field.width - 1)
    ys_c = np.clip(ys, 0, field.height - 1)
    coords = field.coords[np.ix_(ys_c, xs_c)].copy()
    mask = field.mask[np.ix_(ys_c, xs_c)] & valid_y[:, None] & valid_x[None, :]

    # foreground presence is checked on the source region, not the resample
    ix0 = max(0, int(math.floor(sx0)))
    iy0 = max(0, int(math.floor(sy0)))
    ix1 = min(field.width, int(math.ceil(roi.max_x)))
    iy1 = min(field.height, int(math.ceil(roi.max_y)))
    if not field.mask[iy0:iy1, ix0:ix1].any():
        raise EmptyCrop("no foreground inside the crop region")
    return LocationField(coords, mask)


def uncrop_pixels(pixels: np.ndarray, roi: BoundingBox2D, out_size: int) -> np.ndarray:
    """Map crop-frame pixel coordinates back to source-frame coordinates.

    Inverts the affine placement used by crop_resize_field. Nearest-
    neighbor resampling quantizes to source pixels, so round trips are
    exact only to within one source pixel.
    """
    pixels = np.asarray(pixels, dtype=float)
    out = np.empty_like(pixels)
    out[..., 0] = roi.min_x + pixels[..., 0] * (roi.width / out_size)
    out[..., 1] = roi.min_y + pixels[..., 1] * (roi.height / out_size)
    return out


def write_field(f: LocationField) -> bytes:
    """Serialize to the LF3D byte format (little-endian).

    Layout: magic "LF3D", u32 version, u32 height, u32 width,
    H*W*3 float32 coords (row-major, channel-interleaved), H*W u8 mask.
    """
    header = MAGIC + struct.pack("<III", FORMAT_VERSION, f.height, f.width)
    coords = f.coords.astype("<f4", copy=False).tobytes()
    mask = f.mask.astype(np.uint8).tobytes()
    return header + coords + mask


def read_field(data: bytes) -> LocationField:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {data[:4]!r}")
    if len(data) < 16:
        raise TruncatedPayload(f"header needs 16 bytes, got {len(data)}")
    version, height, width = struct.unpack("<III", data[4:16])
    if version != FORMAT_VERSION:
        raise BadMagic(f"unsupported format version {version}")
    n = height * width
    need = 16 + n * 12 + n
    if len(data) < need:
        raise TruncatedPayload(f"need {need} bytes for {width}x{height}, got {len(data)}")
    coords = np.frombuffer(data, dtype="<f4", count=n * 3, offset=16).reshape(height, width, 3)
    mask = np.frombuffer(data, dtype=np.uint8, count=n, offset=16 + n * 12).reshape(height, width)
    return LocationField(coords.copy(), mask.astype(bool))


def write_field_file(f: LocationField, path) -> None:
    Path(path).write_bytes(write_field(f))


def read_field_file(path) -> LocationField:
    return read_field(Path(path).read_bytes())


@dataclass(frozen=True)
class PoseSamplerConfig:
    """Ranges for synthetic pose draws, shaped like ground-view photos.

    Azimuth is always uniform over the full circle. Elevation is uniform
    on its range, in-plane rotation a truncated normal, depth and focal
    log-uniform, and the principal point uniform over the central
    principal_fraction of the frame. All angles in radians.
    """

    frame_width: int = 512
    frame_height: int = 512
    elevation_range: tuple[float, float] = (math.radians(-10.0), math.radians(60.0))
    theta_sigma: float = math.radians(5.0)
    theta_clip: float = math.radians(15.0)
    depth_range: tuple[float, float] = (3.0, 30.0)
    focal_range: tuple[float, float] = (500.0, 3000.0)
    principal_fraction: float = 0.5

    def __post_init__(self):
        if self.frame_width < 1 or self.frame_height < 1:
            raise BadConfig("frame size must be positive")
        if self.elevation_range[0] > self.elevation_range[1]:
            raise BadConfig(f"inverted elevation range {self.elevation_range}")
        if self.theta_sigma < 0 or self.theta_clip < 0:
            raise BadConfig("theta sigma and clip must be non-negative")
        for name, (lo, hi) in (("depth", self.depth_range), ("focal", self.focal_range)):
            if lo <= 0 or hi <= 0:
                raise BadConfig(f"{name} range must be positive, got {(lo, hi)}")
            if lo > hi:
                raise BadConfig(f"inverted {name} range {(lo, hi)}")
        if not 0.0 < self.principal_fraction <= 1.0:
            raise BadConfig(f"principal_fraction must be in (0, 1], got {self.principal_fraction}")


def _log_uniform(rng, lo: float, hi: float) -> float:
    if lo == hi:
        return lo
    return math.exp(rng.uniform(math.log(lo), math.log(hi)))


def _truncated_normal(rng, sigma: float, clip: float) -> float:
    if sigma == 0.0 or clip == 0.0:
        return 0.0
    while True:
        x = rng.normal(0.0, sigma)
        if abs(x) <= clip:
            return float(x)


def sample_pose(rng: np.random.Generator, config: PoseSamplerConfig) -> PoseParams:
    """One independent pose draw; deterministic for a fixed generator state."""
    azimuth = rng.uniform(0.0, 2.0 * math.pi)
    lo, hi = config.elevation_range
    elevation = lo if lo == hi else rng.uniform(lo, hi)
    theta = _truncated_normal(rng, config.theta_sigma, config.theta_clip)
    depth = _log_uniform(rng, *config.depth_range)
    focal = _log_uniform(rng, *config.focal_range)
    half_u = 0.5 * config.principal_fraction * config.frame_width
    half_v = 0.5 * config.principal_fraction * config.frame_height
    cu, cv = 0.5 * config.frame_width, 0.5 * config.frame_height
    u = rng.uniform(cu - half_u, cu + half_u)
    v = rng.uniform(cv - half_v, cv + half_v)
    return PoseParams(azimuth, elevation, theta, depth, focal, u, v)


@dataclass(frozen=True)
class SyntheticSample:
    sample_id: str
    model_id: str
    pose: PoseParams
    roi: BoundingBox2D

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "model_id": self.model_id,
                "pose": self.pose.to_dict(),
                "roi": self.roi.to_list(),
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "SyntheticSample":
        obj = json.loads(line)
        return cls(
            sample_id=obj["sample_id"],
            model_id=obj["model_id"],
            pose=PoseParams.from_dict(obj["pose"]),
            roi=BoundingBox2D.from_list(obj["roi"]),
        )


class CorpusError(FieldError):
    def __init__(self, sample_index: int, cause: Exception):
        super().__init__(f"sample {sample_index}: {cause}")
        self.sample_index = sample_index
        self.cause = cause


@dataclass
class DirectorySink:
    """Writes field files plus a manifest.jsonl into a directory."""

    root: Path
    manifest_name: str = "manifest.jsonl"
    _entries: list = dataclass_field(default_factory=list)

    def __post_init__(self):
        self.root = Path(self.root)
        self.root.mkdir(parents=True, exist_ok=True)

    def write(self, sample: SyntheticSample, f: LocationField) -> None:
        write_field_file(f, self.root / f"{sample.sample_id}.lf3d")
        self._entries.append(sample)

    def finish(self) -> list[SyntheticSample]:
        path = self.root / self.manifest_name
        with path.open("w") as out:
            for entry in self._entries:
                out.write(entry.to_json() + "\n")
        return list(self._entries)


def _generate_sample(meshes, index: int, seed: int, config: PoseSamplerConfig,
                     field_size: int, crop_to_roi: bool):
    mesh = meshes[index % len(meshes)]
    rng = np.random.default_rng(seed + index)
    pose = sample_pose(rng, config)
    full = rasterize_field(mesh, pose, config.frame_width, config.frame_height)
    roi = project_bbox(pose, mesh)
    if crop_to_roi:
        out = crop_resize_field(full, roi, field_size)
    else:
        out = full
    sample = SyntheticSample(
        sample_id=f"sample_{index:06d}",
        model_id=mesh.model_id,
        pose=pose,
        roi=roi,
    )
    return sample, out


def generate_corpus(
    meshes: list[TriangleMesh],
    count: int,
    config: PoseSamplerConfig,
    sink,
    seed: int = 0,
    field_size: int = 56,
    crop_to_roi: bool = True,
    workers: int = 1,
) -> list[SyntheticSample]:
    """Generate a synthetic pose/field corpus, round-robin over the meshes.

    Sample i depends only on seed + i, so output is identical for any
    worker count or scheduling. Each sample is rasterized at the frame
    size, cropped to its projected bounding box (unless crop_to_roi is
    false) and resized to field_size, then handed to the sink. Returns
    the manifest entries in sample order.
    """
    if not meshes:
        raise ValueError("need at least one mesh")
    if count < 0:
        raise ValueError("count must be non-negative")

    def job(index):
        try:
            return _generate_sample(meshes, index, seed, config, field_size, crop_to_roi)
        except Exception as exc:
            raise CorpusError(index, exc) from exc

    entries = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for sample, fld in pool.map(job, range(count)):  # yields in index order
                sink.write(sample, fld)
                entries.append(sample)
    else:
        for i in range(count):
            sample, fld = job(i)
            sink.write(sample, fld)
            entries.append(sample)
    if hasattr(sink, "finish"):
        sink.finish()
    return entries
