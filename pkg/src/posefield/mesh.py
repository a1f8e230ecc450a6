"""Triangle meshes: wavefront-style loading, normalization, surface sampling."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class MeshError(Exception):
    pass


class ParseError(MeshError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptyMesh(MeshError):
    pass


class DegenerateExtent(MeshError):
    pass


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable triangle surface: vertices (V, 3) and index triples (T, 3)."""

    vertices: np.ndarray
    triangles: np.ndarray
    model_id: str = ""

    def __post_init__(self):
        vertices = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        triangles = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {vertices.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError(f"triangles must be (T, 3), got {triangles.shape}")
        if triangles.shape[0] < 1:
            raise EmptyMesh("mesh has no triangles")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle indices out of range")
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def extent(self) -> np.ndarray:
        lo, hi = self.bounds
        return hi - lo

    def triangle_areas(self) -> np.ndarray:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def load_mesh(source, model_id: str = "") -> TriangleMesh:
    """Parse wavefront-style geometry text (v/f statements).

    Polygons with more than three sides are fan-triangulated. Texture and
    normal references, materials and grouping statements are ignored.
    Negative face indices are resolved relative to the vertices seen so
    far, per the wavefront convention; index 0 is always an error.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8", errors="replace")
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[list[int], int]] = []  # resolved-or-positive indices + line number
    for line_number, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        keyword = tokens[0]
        if keyword == "v":
            if len(tokens) < 4:
                raise ParseError(line_number, f"vertex needs 3 coordinates: {line!r}")
            try:
                vertices.append((float(tokens[1]), float(tokens[2]), float(tokens[3])))
            except ValueError:
                raise ParseError(line_number, f"bad vertex coordinate: {line!r}") from None
        elif keyword == "f":
            if len(tokens) < 4:
                raise ParseError(line_number, f"face needs at least 3 vertices: {line!r}")
            indices = []
            for token in tokens[1:]:
                head = token.split("/")[0]
                try:
                    idx = int(head)
                except ValueError:
                    raise ParseError(line_number, f"bad face index {token!r}") from None
                if idx == 0:
                    raise ParseError(line_number, "face indices are 1-based, got 0")
                if idx < 0:
                    idx += len(vertices)  # relative to vertices seen so far
                    if idx < 0:
                        raise ParseError(line_number, f"relative index {token!r} out of range")
                else:
                    idx -= 1
                indices.append(idx)
            faces.append((indices, line_number))
        # vt/vn/vp/mtllib/usemtl/o/g/s/l and anything else: ignored

    if not faces:
        raise EmptyMesh("no face statements found")
    triangles = []
    vertex_count = len(vertices)
    for indices, line_number in faces:
        for idx in indices:
            if idx >= vertex_count:
                raise ParseError(line_number, f"face index {idx + 1} exceeds vertex count {vertex_count}")
        for k in range(1, len(indices) - 1):  # fan triangulation
            triangles.append((indices[0], indices[k], indices[k + 1]))
    return TriangleMesh(np.array(vertices), np.array(triangles), model_id=model_id)


def dump_mesh(mesh: TriangleMesh) -> str:
    """Wavefront-style text that load_mesh reads back losslessly."""
    lines = []
    for x, y, z in mesh.vertices.tolist():
        lines.append(f"v {x!r} {y!r} {z!r}")
    for i, j, k in mesh.triangles:
        lines.append(f"f {i + 1} {j + 1} {k + 1}")
    return "\n".join(lines) + "\n"


def load_mesh_file(path, model_id: str | None = None) -> TriangleMesh:
    import pathlib

    p = pathlib.Path(path)
    return load_mesh(p.read_text(), model_id=model_id if model_id is not None else p.stem)


def normalize_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Center the bounding box at the origin and scale its longest edge to 1."""
    lo, hi = mesh.bounds
    longest = float(np.max(hi - lo))
    if longest <= 0.0:
        raise DegenerateExtent("bounding box has zero longest edge")
    center = 0.5 * (lo + hi)
    return replace(mesh, vertices=(mesh.vertices - center) / longest)


def sample_points(mesh: TriangleMesh, n: int, seed: int = 0) -> np.ndarray:
    """Deterministic point set on the mesh for distance metrics.

    Returns all vertices when n covers them; otherwise draws n
    area-weighted samples on the surface (uniform per unit area).
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    if n >= len(mesh.vertices):
        return mesh.vertices.copy()
    rng = np.random.default_rng(seed)
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total > 0:
        weights = areas / total
    else:
        weights = np.full(len(areas), 1.0 / len(areas))  # all-degenerate fallback
    tri = rng.choice(len(areas), size=n, p=weights)
    a = mesh.vertices[mesh.triangles[tri, 0]]
    b = mesh.vertices[mesh.triangles[tri, 1]]
    c = mesh.vertices[mesh.triangles[tri, 2]]
    r1 = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    return (1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c


def decimate_mesh(mesh: TriangleMesh, max_triangles: int) -> TriangleMesh:
    """Cheap decimation for client payloads: keep the largest triangles.

    Vertex list is compacted to the referenced subset. Silhouette quality
    is adequate for overlay use; not a simplification algorithm.
    """
    if max_triangles < 1:
        raise ValueError("max_triangles must be >= 1")
    if len(mesh.triangles) <= max_triangles:
        return mesh
    order = np.argsort(-mesh.triangle_areas(), kind="stable")[:max_triangles]
    kept = mesh.triangles[np.sort(order)]
    used = np.unique(kept)
    remap = np.full(len(mesh.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(mesh.vertices[used], remap[kept], model_id=mesh.model_id)
