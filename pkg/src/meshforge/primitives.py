"""Procedural triangle meshes: test fixtures and the mock generator's output."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh

__all__ = ["tetrahedron", "cube", "icosahedron", "icosphere", "uv_sphere", "plane_grid"]


def tetrahedron(scale: float = 1.0) -> Mesh:
    v = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64
    ) * scale
    f = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]
    return Mesh(v, f)


def cube(scale: float = 1.0) -> Mesh:
    """Axis-aligned cube surface, 8 vertices, 12 triangles, outward winding."""
    v = np.array(
        [
            [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
            [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
        ],
        dtype=np.float64,
    ) * scale
    quads = [
        [0, 3, 2, 1],  # z = -1
        [4, 5, 6, 7],  # z = +1
        [0, 1, 5, 4],  # y = -1
        [2, 3, 7, 6],  # y = +1
        [0, 4, 7, 3],  # x = -1
        [1, 2, 6, 5],  # x = +1
    ]
    f = []
    for a, b, c, d in quads:
        f.append([a, b, c])
        f.append([a, c, d])
    return Mesh(v, f)


def icosahedron(radius: float = 1.0) -> Mesh:
    phi = (1.0 + 5.0 ** 0.5) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v *= radius / np.linalg.norm(v[0])
    f = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    return Mesh(v, f)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> Mesh:
    """Icosahedron subdivided ``subdivisions`` times, projected to a sphere.

    Vertex counts by level: 12, 42, 162, 642, 2562, 10242, 40962, ...
    """
    base = icosahedron(1.0)
    verts = [tuple(p) for p in base.vertices.tolist()]
    faces = [tuple(f) for f in base.faces.tolist()]
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint.get(key)
            if idx is None:
                pa, pb = verts[a], verts[b]
                p = ((pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2, (pa[2] + pb[2]) / 2)
                idx = len(verts)
                verts.append(p)
                midpoint[key] = idx
            return idx

        next_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            next_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = next_faces
    v = np.array(verts, dtype=np.float64)
    v *= radius / np.linalg.norm(v, axis=1, keepdims=True)
    return Mesh(v, np.array(faces, dtype=np.uint32))


def uv_sphere(rings: int = 16, segments: int = 24, radius: float = 1.0) -> Mesh:
    """Latitude/longitude sphere with pole fans: (rings-1)*segments + 2 vertices."""
    if rings < 2 or segments < 3:
        raise ValueError("uv_sphere needs rings >= 2 and segments >= 3")
    verts = [(0.0, 0.0, radius)]
    for i in range(1, rings):
        theta = np.pi * i / rings
        z = radius * np.cos(theta)
        r = radius * np.sin(theta)
        for j in range(segments):
            phi = 2 * np.pi * j / segments
            verts.append((r * np.cos(phi), r * np.sin(phi), z))
    verts.append((0.0, 0.0, -radius))
    south = len(verts) - 1

    def ring_ix(i: int, j: int) -> int:
        return 1 + (i - 1) * segments + (j % segments)

    faces = []
    for j in range(segments):
        faces.append((0, ring_ix(1, j), ring_ix(1, j + 1)))
    for i in range(1, rings - 1):
        for j in range(segments):
            a, b = ring_ix(i, j), ring_ix(i, j + 1)
            c, d = ring_ix(i + 1, j), ring_ix(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    for j in range(segments):
        faces.append((south, ring_ix(rings - 1, j + 1), ring_ix(rings - 1, j)))
    return Mesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.uint32))


def plane_grid(nx: int = 4, ny: int = 4, size: float = 1.0, z: float = 0.0) -> Mesh:
    """Flat (nx+1)x(ny+1) vertex grid in the plane z=const, triangulated."""
    xs = np.linspace(-size / 2, size / 2, nx + 1)
    ys = np.linspace(-size / 2, size / 2, ny + 1)
    verts = [(x, y, z) for y in ys for x in xs]
    faces = []
    for iy in range(ny):
        for ix in range(nx):
            a = iy * (nx + 1) + ix
            b = a + 1
            c = a + (nx + 1)
            d = c + 1
            faces.append((a, b, d))
            faces.append((a, d, c))
    return Mesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.uint32))
