"""Greedy quadric edge-collapse decimation to a target vertex budget.

The collapse queue is a lazy-deletion priority queue: every entry carries
the version stamps of its endpoints, and entries whose endpoints have
since changed are skipped on pop instead of being removed eagerly.
Candidates rejected by the normal-flip or manifold guards are parked and
re-queued whenever a collapse lands in their neighborhood, so a
temporarily blocked edge is never lost.

At every step the executed collapse is the cheapest currently legal one;
cost ties break on the smallest (min-index, max-index) edge key, which
makes the whole run deterministic for a given mesh and config.

Two interchangeable engines implement the loop: a numba kernel
(_decimate_numba) used when numba imports, and a pure-Python reference
(_decimate_python below). They share operation order exactly, so results
are bit-identical; the kernel exists because budget-size inputs mean tens
of thousands of collapses per run and the interpreted loop cannot meet
the per-mesh latency target.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from heapq import heapify, heappop, heappush

import numpy as np

from .mesh import Mesh, require_valid
from .meshio import binary_size_counts
from .quadrics import vertex_quadric_array

try:
    from ._decimate_numba import decimate_kernel as _kernel
except ImportError:  # pragma: no cover - exercised only without numba
    _kernel = None

__all__ = ["SimplifyConfig", "SimplifyReport", "simplify", "vertex_budget_sweep"]


@dataclass(frozen=True)
class SimplifyConfig:
    target_vertices: int = 1000
    preserve_boundary: bool = True
    placement_strategy: str = "optimal-solve"  # or "midpoint-fallback"
    singular_threshold: float = 1e-12
    record_collapses: bool = False

    def __post_init__(self):
        if self.target_vertices < 4:
            raise ValueError("target_vertices must be >= 4")
        if self.placement_strategy not in ("optimal-solve", "midpoint-fallback"):
            raise ValueError(f"unknown placement strategy {self.placement_strategy!r}")


@dataclass
class SimplifyReport:
    target_vertices: int
    initial_vertices: int
    initial_faces: int
    final_vertices: int
    final_faces: int
    collapse_count: int
    total_error: float
    wall_time_s: float
    blocked_before_target: bool = False
    serialized_size_binary: int = 0
    # (a, b, cost, placement) per executed collapse, only with record_collapses
    collapse_trace: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "target_vertices": self.target_vertices,
            "initial_vertices": self.initial_vertices,
            "initial_faces": self.initial_faces,
            "final_vertices": self.final_vertices,
            "final_faces": self.final_faces,
            "collapse_count": self.collapse_count,
            "total_error": self.total_error,
            "wall_time_s": self.wall_time_s,
            "blocked_before_target": self.blocked_before_target,
            "serialized_size_binary": self.serialized_size_binary,
        }


def _unique_edges(faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sorted unique undirected edges and their face-incidence counts."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [0, 2]]])
    e.sort(axis=1)
    flat = e[:, 0].astype(np.int64) * (int(faces.max()) + 1 if faces.size else 1) + e[:, 1]
    order = np.argsort(flat, kind="stable")
    flat_sorted = flat[order]
    uniq_mask = np.ones(len(flat_sorted), dtype=bool)
    uniq_mask[1:] = flat_sorted[1:] != flat_sorted[:-1]
    uniq_idx = order[uniq_mask]
    counts = np.diff(np.append(np.nonzero(uniq_mask)[0], len(flat_sorted)))
    return e[uniq_idx].astype(np.int64), counts.astype(np.int64)


def simplify(mesh: Mesh, cfg: SimplifyConfig | None = None) -> tuple[Mesh, SimplifyReport]:
    """Collapse edges greedily until the vertex budget is met.

    Collapses that would flip a face normal or create a non-manifold edge
    are rejected; if every remaining candidate is blocked the partial
    result is returned with ``blocked_before_target`` set instead of
    raising. With ``preserve_boundary`` (the default), edges touching an
    open-boundary vertex are never collapsed.
    """
    if cfg is None:
        cfg = SimplifyConfig()
    require_valid(mesh)
    t0 = time.perf_counter()

    nv = mesh.vertex_count
    report = SimplifyReport(
        target_vertices=cfg.target_vertices,
        initial_vertices=nv,
        initial_faces=mesh.face_count,
        final_vertices=nv,
        final_faces=mesh.face_count,
        collapse_count=0,
        total_error=0.0,
        wall_time_s=0.0,
        serialized_size_binary=binary_size_counts(
            nv, mesh.face_count, with_colors=mesh.colors is not None
        ),
    )
    if nv <= cfg.target_vertices:
        report.wall_time_s = time.perf_counter() - t0
        return mesh, report

    faces = mesh.faces.astype(np.int64)
    edges, edge_face_counts = _unique_edges(faces)
    locked = np.zeros(nv, dtype=np.bool_)
    if cfg.preserve_boundary:
        boundary = edges[edge_face_counts == 1]
        locked[boundary.ravel()] = True

    quad = vertex_quadric_array(mesh)
    px = np.ascontiguousarray(mesh.vertices[:, 0])
    py = np.ascontiguousarray(mesh.vertices[:, 1])
    pz = np.ascontiguousarray(mesh.vertices[:, 2])
    optimal = cfg.placement_strategy == "optimal-solve"

    engine = _kernel if _kernel is not None else _decimate_python
    (alive, face_alive, n_collapse, total_error, blocked,
     t_a, t_b, t_cost, t_x, t_y, t_z) = engine(
        px, py, pz, quad, faces, edges, locked,
        cfg.target_vertices, cfg.singular_threshold, optimal,
    )

    report.collapse_count = int(n_collapse)
    report.total_error = float(total_error)
    report.blocked_before_target = bool(blocked)
    if cfg.record_collapses:
        report.collapse_trace = [
            (int(t_a[i]), int(t_b[i]), float(t_cost[i]),
             (float(t_x[i]), float(t_y[i]), float(t_z[i])))
            for i in range(int(n_collapse))
        ]

    # rebuild a compact mesh from the surviving vertices and faces
    alive = np.asarray(alive, dtype=bool)
    remap = np.cumsum(alive) - 1
    new_verts = np.stack([px[alive], py[alive], pz[alive]], axis=1)
    kept = np.asarray(face_alive, dtype=bool)
    new_faces = remap[faces[kept]]
    colors = mesh.colors[alive] if mesh.colors is not None else None
    out = Mesh(new_verts, new_faces.astype(np.uint32), colors)

    report.final_vertices = out.vertex_count
    report.final_faces = out.face_count
    report.serialized_size_binary = binary_size_counts(
        out.vertex_count, out.face_count, with_colors=colors is not None
    )
    report.wall_time_s = time.perf_counter() - t0
    return out, report


def vertex_budget_sweep(mesh: Mesh, targets: list[int], **cfg_kwargs) -> list[SimplifyReport]:
    """One independent simplification run per target, reports in order.

    Targets must be sorted ascending and all >= 4. Because the greedy
    collapse sequence is deterministic, accumulated error is non-increasing
    as the target grows.
    """
    if list(targets) != sorted(targets):
        raise ValueError("targets must be sorted ascending")
    if any(t < 4 for t in targets):
        raise ValueError("every target must be >= 4")
    reports = []
    for t in targets:
        _, rep = simplify(mesh, SimplifyConfig(target_vertices=t, **cfg_kwargs))
        reports.append(rep)
    return reports


def _decimate_python(px, py, pz, quad_arr, faces_arr, edges, locked_arr,
                     target, singular, optimal):
    """Pure-Python engine with the same contract as the numba kernel.

    Kept as the fallback when numba is unavailable and as the readable
    reference for the kernel's semantics.
    """
    nv = len(px)
    faces: list[list[int] | None] = [list(f) for f in faces_arr.tolist()]
    vfaces: list[set[int]] = [set() for _ in range(nv)]
    vnbrs: list[set[int]] = [set() for _ in range(nv)]
    for fi, f in enumerate(faces):
        a, b, c = f
        vfaces[a].add(fi)
        vfaces[b].add(fi)
        vfaces[c].add(fi)
        vnbrs[a].add(b); vnbrs[a].add(c)
        vnbrs[b].add(a); vnbrs[b].add(c)
        vnbrs[c].add(a); vnbrs[c].add(b)

    pxl = px.tolist()
    pyl = py.tolist()
    pzl = pz.tolist()
    quad = [tuple(r) for r in quad_arr.tolist()]
    locked = locked_arr.tolist()
    version = [0] * nv
    alive = [True] * nv

    def candidate(a: int, b: int):
        # op-for-op mirror of quadrics.collapse_cost / the numba kernel
        qa = quad[a]; qb = quad[b]
        q0 = qa[0] + qb[0]; q1 = qa[1] + qb[1]; q2 = qa[2] + qb[2]
        q3 = qa[3] + qb[3]; q4 = qa[4] + qb[4]; q5 = qa[5] + qb[5]
        q6 = qa[6] + qb[6]; q7 = qa[7] + qb[7]; q8 = qa[8] + qb[8]
        q9 = qa[9] + qb[9]
        if optimal:
            c00 = q4 * q7 - q5 * q5
            c01 = q1 * q7 - q5 * q2
            c02 = q1 * q5 - q4 * q2
            det = q0 * c00 - q1 * c01 + q2 * c02
            if det >= singular or det <= -singular:
                r0 = -q3; r1 = -q6; r2 = -q8
                x = (r0 * c00 - q1 * (r1 * q7 - q5 * r2) + q2 * (r1 * q5 - q4 * r2)) / det
                y = (q0 * (r1 * q7 - r2 * q5) - r0 * c01 + q2 * (q1 * r2 - r1 * q2)) / det
                z = (q0 * (q4 * r2 - q5 * r1) - q1 * (q1 * r2 - r1 * q2) + r0 * c02) / det
                cost = (
                    q0 * x * x + 2.0 * q1 * x * y + 2.0 * q2 * x * z + 2.0 * q3 * x
                    + q4 * y * y + 2.0 * q5 * y * z + 2.0 * q6 * y
                    + q7 * z * z + 2.0 * q8 * z + q9
                )
                return (cost if cost > 0.0 else 0.0), x, y, z
        x1 = pxl[a]; y1 = pyl[a]; z1 = pzl[a]
        x2 = pxl[b]; y2 = pyl[b]; z2 = pzl[b]
        mx = (x1 + x2) / 2.0; my = (y1 + y2) / 2.0; mz = (z1 + z2) / 2.0
        e1 = (
            q0 * x1 * x1 + 2.0 * q1 * x1 * y1 + 2.0 * q2 * x1 * z1 + 2.0 * q3 * x1
            + q4 * y1 * y1 + 2.0 * q5 * y1 * z1 + 2.0 * q6 * y1
            + q7 * z1 * z1 + 2.0 * q8 * z1 + q9
        )
        e2 = (
            q0 * x2 * x2 + 2.0 * q1 * x2 * y2 + 2.0 * q2 * x2 * z2 + 2.0 * q3 * x2
            + q4 * y2 * y2 + 2.0 * q5 * y2 * z2 + 2.0 * q6 * y2
            + q7 * z2 * z2 + 2.0 * q8 * z2 + q9
        )
        em = (
            q0 * mx * mx + 2.0 * q1 * mx * my + 2.0 * q2 * mx * mz + 2.0 * q3 * mx
            + q4 * my * my + 2.0 * q5 * my * mz + 2.0 * q6 * my
            + q7 * mz * mz + 2.0 * q8 * mz + q9
        )
        if em <= e1 and em <= e2:
            cost, x, y, z = em, mx, my, mz
        elif e1 <= e2:
            cost, x, y, z = e1, x1, y1, z1
        else:
            cost, x, y, z = e2, x2, y2, z2
        return (cost if cost > 0.0 else 0.0), x, y, z

    heap = []
    for a, b in edges.tolist():
        if locked[a] or locked[b]:
            continue
        cost, x, y, z = candidate(a, b)
        heap.append((cost, a, b, 0, 0, x, y, z))
    heapify(heap)

    parked: dict[tuple[int, int], bool] = {}
    trace: list[tuple[int, int, float, float, float, float]] = []
    remaining = nv
    total_error = 0.0

    def park(a, b):
        parked[(a, b)] = True

    def unpark_around(region: set[int]):
        for key in list(parked):
            a, b = key
            if a not in region and b not in region:
                continue
            del parked[key]
            if not (alive[a] and alive[b]) or b not in vnbrs[a]:
                continue
            cost, x, y, z = candidate(a, b)
            heappush(heap, (cost, a, b, version[a], version[b], x, y, z))

    while remaining > target and heap:
        cost, a, b, va, vb, x, y, z = heappop(heap)
        if version[a] != va or version[b] != vb:
            continue
        shared = vfaces[a] & vfaces[b]
        if not shared:
            continue
        if len(vnbrs[a] & vnbrs[b]) != len(shared):
            park(a, b)
            continue
        flipped = False
        for vsrc in (a, b):
            for fi in vfaces[vsrc]:
                if fi in shared:
                    continue
                f = faces[fi]
                i0, i1, i2 = f
                x0, y0, z0 = pxl[i0], pyl[i0], pzl[i0]
                x1, y1, z1 = pxl[i1], pyl[i1], pzl[i1]
                x2, y2, z2 = pxl[i2], pyl[i2], pzl[i2]
                ux, uy, uz = x1 - x0, y1 - y0, z1 - z0
                wx, wy, wz = x2 - x0, y2 - y0, z2 - z0
                nx0 = uy * wz - uz * wy
                ny0 = uz * wx - ux * wz
                nz0 = ux * wy - uy * wx
                if i0 == vsrc:
                    x0, y0, z0 = x, y, z
                elif i1 == vsrc:
                    x1, y1, z1 = x, y, z
                else:
                    x2, y2, z2 = x, y, z
                ux, uy, uz = x1 - x0, y1 - y0, z1 - z0
                wx, wy, wz = x2 - x0, y2 - y0, z2 - z0
                nx1 = uy * wz - uz * wy
                ny1 = uz * wx - ux * wz
                nz1 = ux * wy - uy * wx
                if nx0 * nx1 + ny0 * ny1 + nz0 * nz1 < 0.0:
                    flipped = True
                    break
            if flipped:
                break
        if flipped:
            park(a, b)
            continue

        pxl[a], pyl[a], pzl[a] = x, y, z
        qa, qb = quad[a], quad[b]
        quad[a] = (
            qa[0] + qb[0], qa[1] + qb[1], qa[2] + qb[2], qa[3] + qb[3],
            qa[4] + qb[4], qa[5] + qb[5], qa[6] + qb[6], qa[7] + qb[7],
            qa[8] + qb[8], qa[9] + qb[9],
        )
        for fi in shared:
            f = faces[fi]
            vfaces[f[0]].discard(fi)
            vfaces[f[1]].discard(fi)
            vfaces[f[2]].discard(fi)
            faces[fi] = None
        for fi in vfaces[b]:
            f = faces[fi]
            if f[0] == b:
                f[0] = a
            elif f[1] == b:
                f[1] = a
            else:
                f[2] = a
            vfaces[a].add(fi)
        vfaces[b] = set()
        nb = vnbrs[b]
        nb.discard(a)
        for n in nb:
            s = vnbrs[n]
            s.discard(b)
            s.add(a)
        vnbrs[a].discard(b)
        vnbrs[a] |= nb
        vnbrs[b] = set()
        alive[b] = False
        version[a] += 1
        version[b] += 1
        remaining -= 1
        total_error += cost
        trace.append((a, b, cost, x, y, z))

        nbrs = vnbrs[a]
        ver_a = version[a]
        if not locked[a]:
            for n in nbrs:
                if locked[n]:
                    continue
                if a < n:
                    ncost, nx, ny, nz = candidate(a, n)
                    heappush(heap, (ncost, a, n, ver_a, version[n], nx, ny, nz))
                else:
                    ncost, nx, ny, nz = candidate(n, a)
                    heappush(heap, (ncost, n, a, version[n], ver_a, nx, ny, nz))
        if parked:
            unpark_around(nbrs | {a})

    for v in range(nv):
        px[v] = pxl[v]
        py[v] = pyl[v]
        pz[v] = pzl[v]
    face_alive = np.array([f is not None for f in faces], dtype=np.bool_)
    for fi, f in enumerate(faces):
        if f is not None:
            faces_arr[fi, 0] = f[0]
            faces_arr[fi, 1] = f[1]
            faces_arr[fi, 2] = f[2]
    alive_arr = np.array(alive, dtype=np.bool_)
    t_a = np.array([t[0] for t in trace], dtype=np.int64)
    t_b = np.array([t[1] for t in trace], dtype=np.int64)
    t_cost = np.array([t[2] for t in trace], dtype=np.float64)
    t_x = np.array([t[3] for t in trace], dtype=np.float64)
    t_y = np.array([t[4] for t in trace], dtype=np.float64)
    t_z = np.array([t[5] for t in trace], dtype=np.float64)
    return (alive_arr, face_alive, len(trace), total_error,
            remaining > target, t_a, t_b, t_cost, t_x, t_y, t_z)
