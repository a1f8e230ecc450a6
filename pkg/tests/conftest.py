"""Shared geometry builders for the test suite."""

import numpy as np

from posefield.mesh import TriangleMesh, normalize_mesh

CUBE_TRIANGLES = np.array(
    [
        [0, 1, 3], [0, 3, 2],
        [4, 6, 7], [4, 7, 5],
        [0, 4, 5], [0, 5, 1],
        [2, 3, 7], [2, 7, 6],
        [0, 2, 6], [0, 6, 4],
        [1, 5, 7], [1, 7, 3],
    ]
)


def box_mesh(center=(0.0, 0.0, 0.0), size=(1.0, 1.0, 1.0), model_id="box"):
    """Axis-aligned box as 12 triangles."""
    center = np.asarray(center, dtype=float)
    half = 0.5 * np.asarray(size, dtype=float)
    corners = np.array(
        [[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float
    )
    return TriangleMesh(center + corners * half, CUBE_TRIANGLES, model_id=model_id)


def icosphere(subdivisions=2, radius=0.5, model_id="icosphere"):
    """Subdivided icosahedron projected onto a sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v / np.linalg.norm(v) for v in verts]
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            m = verts[i] + verts[j]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(subdivisions):
        next_faces = []
        for i, j, k in faces:
            a, b, c = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            next_faces += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = next_faces
    return TriangleMesh(np.array(verts) * radius, np.array(faces), model_id=model_id)


def car_like_mesh(model_id="carlike"):
    """Asymmetric compound of boxes shaped roughly like a vehicle.

    Flat faces plus an off-center cabin make front/back/top distinct, so
    there is no rotational symmetry to confuse pose recovery tests.
    """
    body = box_mesh(center=(0, 0.10, 0), size=(1.0, 0.28, 0.42))
    cabin = box_mesh(center=(-0.08, -0.12, 0), size=(0.48, 0.22, 0.36))
    hood = box_mesh(center=(0.38, -0.02, 0), size=(0.22, 0.06, 0.30))
    verts = np.vstack([body.vertices, cabin.vertices, hood.vertices])
    tris = np.vstack(
        [body.triangles, cabin.triangles + 8, hood.triangles + 16]
    )
    return normalize_mesh(TriangleMesh(verts, tris, model_id=model_id))
