"""Quadric error metrics for edge-collapse decimation.

A quadric is a symmetric 4x4 form Q; the error of a point p = (x, y, z) is
the homogeneous product (x, y, z, 1)^T Q (x, y, z, 1). Summing the
area-weighted plane quadrics of a vertex's incident faces gives a form
whose value at p is the (weighted) sum of squared distances from p to
those face planes.

Quadrics are stored as the 10 upper-triangle coefficients in row-major
order::

    (a11, a12, a13, a14,
          a22, a23, a24,
               a33, a34,
                    a44)

The flat-tuple layout is shared with the decimation hot loop in
``simplify``, which works on raw tuples for speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, require_valid

__all__ = [
    "Quadric",
    "CollapseCandidate",
    "compute_vertex_quadrics",
    "vertex_quadric_array",
    "collapse_cost",
    "quadric_error",
    "solve_placement",
]

ZERO10 = (0.0,) * 10


def quadric_error(q, x: float, y: float, z: float) -> float:
    """Evaluate the quadric form at (x, y, z, 1). ``q`` is a 10-tuple."""
    return (
        q[0] * x * x
        + 2.0 * q[1] * x * y
        + 2.0 * q[2] * x * z
        + 2.0 * q[3] * x
        + q[4] * y * y
        + 2.0 * q[5] * y * z
        + 2.0 * q[6] * y
        + q[7] * z * z
        + 2.0 * q[8] * z
        + q[9]
    )


def add10(a, b):
    """Sum of two 10-coefficient quadrics."""
    return (
        a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3], a[4] + b[4],
        a[5] + b[5], a[6] + b[6], a[7] + b[7], a[8] + b[8], a[9] + b[9],
    )


def plane_quadric(a: float, b: float, c: float, d: float, weight: float = 1.0):
    """Quadric of the plane ax + by + cz + d = 0 with (a,b,c) unit length."""
    return (
        weight * a * a, weight * a * b, weight * a * c, weight * a * d,
        weight * b * b, weight * b * c, weight * b * d,
        weight * c * c, weight * c * d,
        weight * d * d,
    )


def solve_placement(q, singular_threshold: float = 1e-12):
    """Minimizer of the quadric, or None when the 3x3 system is singular.

    Solves grad = 0 by Cramer's rule; the system matrix is the quadric's
    upper-left 3x3 block and the right-hand side is -(a14, a24, a34).
    """
    q0, q1, q2, q3, q4, q5, q6, q7, q8, _ = q
    c00 = q4 * q7 - q5 * q5
    c01 = q1 * q7 - q5 * q2
    c02 = q1 * q5 - q4 * q2
    det = q0 * c00 - q1 * c01 + q2 * c02
    if det > -singular_threshold and det < singular_threshold:
        return None
    r0, r1, r2 = -q3, -q6, -q8
    x = (r0 * c00 - q1 * (r1 * q7 - q5 * r2) + q2 * (r1 * q5 - q4 * r2)) / det
    y = (q0 * (r1 * q7 - r2 * q5) - r0 * c01 + q2 * (q1 * r2 - r1 * q2)) / det
    z = (q0 * (q4 * r2 - q5 * r1) - q1 * (q1 * r2 - r1 * q2) + r0 * c02) / det
    return (x, y, z)


@dataclass(frozen=True)
class Quadric:
    """Public wrapper over the 10-coefficient representation."""

    coefficients: tuple[float, ...] = ZERO10

    def __post_init__(self):
        if len(self.coefficients) != 10:
            raise ValueError("a quadric has exactly 10 coefficients")

    @classmethod
    def zero(cls) -> "Quadric":
        return cls(ZERO10)

    @classmethod
    def from_plane(cls, a: float, b: float, c: float, d: float, weight: float = 1.0):
        return cls(plane_quadric(a, b, c, d, weight))

    def __add__(self, other: "Quadric") -> "Quadric":
        return Quadric(add10(self.coefficients, other.coefficients))

    def error(self, point) -> float:
        x, y, z = point
        return quadric_error(self.coefficients, float(x), float(y), float(z))

    def matrix(self) -> np.ndarray:
        """The full symmetric 4x4 matrix."""
        q = self.coefficients
        return np.array(
            [
                [q[0], q[1], q[2], q[3]],
                [q[1], q[4], q[5], q[6]],
                [q[2], q[5], q[7], q[8]],
                [q[3], q[6], q[8], q[9]],
            ]
        )


@dataclass(frozen=True)
class CollapseCandidate:
    edge: tuple[int, int] | None
    cost: float
    placement: tuple[float, float, float]


def vertex_quadric_array(mesh: Mesh) -> np.ndarray:
    """Per-vertex quadrics as a (V, 10) float64 array.

    Each vertex accumulates the area-weighted plane quadric of every
    incident face. Zero-area faces contribute nothing.
    """
    require_valid(mesh)
    acc = np.zeros((mesh.vertex_count, 10), dtype=np.float64)
    if mesh.face_count == 0:
        return acc
    v = mesh.vertices
    f = mesh.faces.astype(np.int64)
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n, axis=1)
    area = 0.5 * norm
    ok = norm > 0.0
    unit = np.zeros_like(n)
    unit[ok] = n[ok] / norm[ok, None]
    d = -np.einsum("ij,ij->i", unit, p0)
    a, b, c = unit[:, 0], unit[:, 1], unit[:, 2]
    w = area
    planes = np.stack(
        [
            w * a * a, w * a * b, w * a * c, w * a * d,
            w * b * b, w * b * c, w * b * d,
            w * c * c, w * c * d,
            w * d * d,
        ],
        axis=1,
    )
    for k in range(3):
        np.add.at(acc, f[:, k], planes)
    return acc


def compute_vertex_quadrics(mesh: Mesh) -> list[Quadric]:
    return [Quadric(tuple(row)) for row in vertex_quadric_array(mesh).tolist()]


def collapse_cost(
    q1: Quadric | tuple,
    q2: Quadric | tuple,
    v1,
    v2,
    placement_strategy: str = "optimal-solve",
    singular_threshold: float = 1e-12,
) -> CollapseCandidate:
    """Cost and placement for collapsing the edge (v1, v2).

    With the "optimal-solve" strategy the placement minimizes the combined
    quadric when its 3x3 system is nonsingular; otherwise (and always with
    "midpoint-fallback") the cheapest of {v1, v2, midpoint} is used, with
    the midpoint preferred on ties. Cost is never negative.
    """
    c1 = q1.coefficients if isinstance(q1, Quadric) else tuple(q1)
    c2 = q2.coefficients if isinstance(q2, Quadric) else tuple(q2)
    q = add10(c1, c2)
    x1, y1, z1 = float(v1[0]), float(v1[1]), float(v1[2])
    x2, y2, z2 = float(v2[0]), float(v2[1]), float(v2[2])
    placement = None
    if placement_strategy == "optimal-solve":
        placement = solve_placement(q, singular_threshold)
    elif placement_strategy != "midpoint-fallback":
        raise ValueError(f"unknown placement strategy {placement_strategy!r}")
    if placement is None:
        mx, my, mz = (x1 + x2) / 2.0, (y1 + y2) / 2.0, (z1 + z2) / 2.0
        e1 = quadric_error(q, x1, y1, z1)
        e2 = quadric_error(q, x2, y2, z2)
        em = quadric_error(q, mx, my, mz)
        if em <= e1 and em <= e2:
            placement, cost = (mx, my, mz), em
        elif e1 <= e2:
            placement, cost = (x1, y1, z1), e1
        else:
            placement, cost = (x2, y2, z2), e2
    else:
        cost = quadric_error(q, *placement)
    if cost < 0.0:
        cost = 0.0  # rounding can push a PSD form a hair below zero
    return CollapseCandidate(edge=None, cost=cost, placement=placement)
