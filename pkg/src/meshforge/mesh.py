"""Indexed triangle mesh: data model, validation, and statistics.

Meshes are triangles-only. Generator backends are expected to triangulate
before handing meshes to this package. Vertices are float64 positions in
meters; faces are integer index triples. Optional per-vertex colors are
unit-interval RGB.

A ``Mesh`` is treated as immutable once validated: operations that change
geometry return new instances, so meshes can be shared freely across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mesh",
    "MeshStats",
    "ValidationIssue",
    "ValidationReport",
    "MeshValidationError",
    "validate",
    "stats",
    "edge_set",
]


class MeshValidationError(ValueError):
    """Raised when an operation requires a valid mesh but got a broken one."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(f"invalid mesh: {report.summary()}")


@dataclass(frozen=True)
class ValidationIssue:
    code: str  # "index-out-of-range" | "degenerate-face" | "non-finite-coordinate" | "bad-color"
    message: str
    location: int | None = None  # face or vertex index, when applicable


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def summary(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"{i.code}@{i.location}" for i in self.issues[:5]) + (
            f" (+{len(self.issues) - 5} more)" if len(self.issues) > 5 else ""
        )


class Mesh:
    """Indexed triangle mesh.

    ``vertices`` is an (V, 3) float64 array, ``faces`` an (F, 3) uint32
    array, ``colors`` an optional (V, 3) float64 array of RGB in [0, 1].
    """

    __slots__ = ("vertices", "faces", "colors")

    def __init__(self, vertices, faces, colors=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(faces, dtype=np.uint32).reshape(-1, 3)
        self.colors = (
            None
            if colors is None
            else np.ascontiguousarray(colors, dtype=np.float64).reshape(-1, 3)
        )

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mesh):
            return NotImplemented
        if self.vertices.shape != other.vertices.shape:
            return False
        if self.faces.shape != other.faces.shape:
            return False
        if not np.array_equal(self.vertices, other.vertices):
            return False
        if not np.array_equal(self.faces, other.faces):
            return False
        if (self.colors is None) != (other.colors is None):
            return False
        if self.colors is not None and not np.array_equal(self.colors, other.colors):
            return False
        return True

    def __hash__(self):
        raise TypeError("Mesh is not hashable")

    def __repr__(self) -> str:
        return f"Mesh(V={self.vertex_count}, F={self.face_count})"

    def allclose(self, other: "Mesh", tol: float = 1e-6) -> bool:
        """Equality up to a coordinate tolerance (for text-format round trips)."""
        if self.faces.shape != other.faces.shape or not np.array_equal(
            self.faces, other.faces
        ):
            return False
        if self.vertices.shape != other.vertices.shape:
            return False
        if not np.allclose(self.vertices, other.vertices, rtol=0, atol=tol):
            return False
        if (self.colors is None) != (other.colors is None):
            return False
        if self.colors is not None and not np.allclose(
            self.colors, other.colors, rtol=0, atol=tol
        ):
            return False
        return True


@dataclass(frozen=True)
class MeshStats:
    vertex_count: int
    face_count: int
    edge_count: int
    euler_characteristic: int
    serialized_size_bytes: dict[str, int] = field(default_factory=dict)
    bounding_box: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None

    def as_dict(self) -> dict:
        return {
            "vertex_count": self.vertex_count,
            "face_count": self.face_count,
            "edge_count": self.edge_count,
            "euler_characteristic": self.euler_characteristic,
            "serialized_size_bytes": dict(self.serialized_size_bytes),
            "bounding_box": self.bounding_box,
        }


def validate(mesh: Mesh) -> ValidationReport:
    """Check all mesh invariants, reporting every violation found.

    Validation is explicit rather than performed on construction so that
    foreign generator output can be ingested and all its problems reported
    at once.
    """
    issues: list[ValidationIssue] = []
    nv = mesh.vertex_count

    if mesh.vertices.size and not np.all(np.isfinite(mesh.vertices)):
        bad = np.nonzero(~np.isfinite(mesh.vertices).all(axis=1))[0]
        for v in bad:
            issues.append(
                ValidationIssue(
                    "non-finite-coordinate",
                    f"vertex {v} has a NaN or infinite coordinate",
                    int(v),
                )
            )

    if mesh.faces.size:
        out_of_range = np.nonzero((mesh.faces >= nv).any(axis=1))[0]
        for f in out_of_range:
            issues.append(
                ValidationIssue(
                    "index-out-of-range",
                    f"face {f} references a vertex >= {nv}",
                    int(f),
                )
            )
        a, b, c = mesh.faces[:, 0], mesh.faces[:, 1], mesh.faces[:, 2]
        degenerate = np.nonzero((a == b) | (b == c) | (a == c))[0]
        for f in degenerate:
            issues.append(
                ValidationIssue(
                    "degenerate-face",
                    f"face {f} references the same vertex twice",
                    int(f),
                )
            )

    if mesh.colors is not None:
        if len(mesh.colors) != nv:
            issues.append(
                ValidationIssue(
                    "bad-color",
                    f"color count {len(mesh.colors)} != vertex count {nv}",
                )
            )
        elif mesh.colors.size and (
            not np.all(np.isfinite(mesh.colors))
            or mesh.colors.min() < 0.0
            or mesh.colors.max() > 1.0
        ):
            issues.append(
                ValidationIssue("bad-color", "colors must be finite RGB in [0, 1]")
            )

    return ValidationReport(tuple(issues))


def require_valid(mesh: Mesh) -> None:
    report = validate(mesh)
    if not report.ok:
        raise MeshValidationError(report)


def edge_set(mesh: Mesh) -> set[tuple[int, int]]:
    """Undirected edges, each counted once as an (lo, hi) index pair."""
    edges: set[tuple[int, int]] = set()
    for a, b, c in mesh.faces.tolist():
        edges.add((a, b) if a < b else (b, a))
        edges.add((b, c) if b < c else (c, b))
        edges.add((a, c) if a < c else (c, a))
    return edges


def stats(mesh: Mesh) -> MeshStats:
    """Exact counts plus the Euler characteristic V - E + F.

    Pure: repeated calls on the same mesh agree. Raises on invalid input.
    """
    require_valid(mesh)
    from . import meshio  # local import to avoid a cycle at module load

    e = len(edge_set(mesh))
    v, f = mesh.vertex_count, mesh.face_count
    if v:
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        bbox = (tuple(float(x) for x in lo), tuple(float(x) for x in hi))
    else:
        bbox = None
    sizes = {
        "compact-binary": meshio.binary_size(mesh),
        "text-obj": len(meshio.write_mesh(mesh, "text-obj")),
    }
    return MeshStats(
        vertex_count=v,
        face_count=f,
        edge_count=e,
        euler_characteristic=v - e + f,
        serialized_size_bytes=sizes,
        bounding_box=bbox,
    )


def face_normal(vertices: np.ndarray, face) -> np.ndarray:
    """Unnormalized face normal (cross product); zero for degenerate faces."""
    p0, p1, p2 = vertices[face[0]], vertices[face[1]], vertices[face[2]]
    return np.cross(p1 - p0, p2 - p0)


def face_area(vertices: np.ndarray, face) -> float:
    return 0.5 * float(np.linalg.norm(face_normal(vertices, face)))
