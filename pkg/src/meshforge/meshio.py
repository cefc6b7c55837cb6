"""Mesh file I/O: a human-readable OBJ-style text format and a compact binary.

Binary layout (little-endian), file extension ``.mforge``:

    magic   4 bytes  b"MFRG"
    version u16      1 = positions+faces, 2 = adds a per-vertex RGB block
    V       u32      vertex count
    F       u32      face count
    V * 3 * f32      vertex positions
    F * 3 * u32      face indices
    [V * 3 * f32]    vertex colors, version 2 only

Binary round trips are bit-exact for meshes whose coordinates are
float32-representable (the format stores f32). Text round trips are exact
to 1e-6. The text format is standard OBJ ``v``/``f`` lines, with colors as
the common ``v x y z r g b`` extension.
"""

from __future__ import annotations

import struct

import numpy as np

from .mesh import Mesh

__all__ = [
    "FORMATS",
    "MeshFormatError",
    "read_mesh",
    "write_mesh",
    "binary_size",
    "BINARY_EXTENSION",
]

MAGIC = b"MFRG"
BINARY_EXTENSION = ".mforge"
FORMATS = ("text-obj", "compact-binary")

_HEADER = struct.Struct("<4sHII")


class MeshFormatError(ValueError):
    """Truncated input, bad magic, index overflow, or unparseable text."""


def binary_size(mesh: Mesh, with_colors: bool | None = None) -> int:
    """Serialized size of the compact binary format, by the layout formula."""
    if with_colors is None:
        with_colors = mesh.colors is not None
    size = _HEADER.size + 12 * mesh.vertex_count + 12 * mesh.face_count
    if with_colors:
        size += 12 * mesh.vertex_count
    return size


def write_mesh(mesh: Mesh, format: str) -> bytes:
    if format == "compact-binary":
        return _write_binary(mesh)
    if format == "text-obj":
        return _write_text(mesh)
    raise MeshFormatError(f"unknown format {format!r}; expected one of {FORMATS}")


def read_mesh(data: bytes, format: str) -> Mesh:
    if format == "compact-binary":
        return _read_binary(data)
    if format == "text-obj":
        return _read_text(data)
    raise MeshFormatError(f"unknown format {format!r}; expected one of {FORMATS}")


def _write_binary(mesh: Mesh) -> bytes:
    if mesh.vertex_count > 0xFFFFFFFF or mesh.face_count > 0xFFFFFFFF:
        raise MeshFormatError("vertex or face count exceeds u32 range")
    version = 2 if mesh.colors is not None else 1
    parts = [
        _HEADER.pack(MAGIC, version, mesh.vertex_count, mesh.face_count),
        mesh.vertices.astype("<f4").tobytes(),
        mesh.faces.astype("<u4").tobytes(),
    ]
    if mesh.colors is not None:
        parts.append(mesh.colors.astype("<f4").tobytes())
    return b"".join(parts)


def _read_binary(data: bytes) -> Mesh:
    if len(data) < _HEADER.size:
        raise MeshFormatError("truncated input: missing header")
    magic, version, nv, nf = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MeshFormatError(f"bad magic {magic!r}")
    if version not in (1, 2):
        raise MeshFormatError(f"unsupported version {version}")
    expected = binary_size_counts(nv, nf, with_colors=(version == 2))
    if len(data) < expected:
        raise MeshFormatError(
            f"truncated input: {len(data)} bytes, layout needs {expected}"
        )
    off = _HEADER.size
    vertices = np.frombuffer(data, dtype="<f4", count=3 * nv, offset=off).reshape(-1, 3)
    off += 12 * nv
    faces = np.frombuffer(data, dtype="<u4", count=3 * nf, offset=off).reshape(-1, 3)
    off += 12 * nf
    colors = None
    if version == 2:
        colors = np.frombuffer(data, dtype="<f4", count=3 * nv, offset=off).reshape(-1, 3)
    if nf and faces.size and int(faces.max()) >= nv:
        raise MeshFormatError(f"index overflow: face index {int(faces.max())} >= {nv}")
    return Mesh(vertices, faces, colors)


def binary_size_counts(nv: int, nf: int, with_colors: bool = False) -> int:
    size = _HEADER.size + 12 * nv + 12 * nf
    if with_colors:
        size += 12 * nv
    return size


def _write_text(mesh: Mesh) -> bytes:
    # repr() emits the shortest digits that round-trip the float64 exactly
    lines = []
    if mesh.colors is None:
        for x, y, z in mesh.vertices.tolist():
            lines.append(f"v {x!r} {y!r} {z!r}")
    else:
        for (x, y, z), (r, g, b) in zip(mesh.vertices.tolist(), mesh.colors.tolist()):
            lines.append(f"v {x!r} {y!r} {z!r} {r!r} {g!r} {b!r}")
    for a, b, c in mesh.faces.tolist():
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    lines.append("")
    return "\n".join(lines).encode("utf-8")


def _read_text(data: bytes) -> Mesh:
    vertices: list[list[float]] = []
    colors: list[list[float]] = []
    faces: list[list[int]] = []
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MeshFormatError(f"not valid utf-8 text: {exc}") from exc
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) not in (4, 7):
                raise MeshFormatError(f"line {ln}: vertex needs 3 or 6 numbers")
            try:
                nums = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise MeshFormatError(f"line {ln}: {exc}") from exc
            vertices.append(nums[:3])
            if len(nums) == 6:
                colors.append(nums[3:])
        elif tag == "f":
            if len(parts) != 4:
                raise MeshFormatError(f"line {ln}: only triangle faces are supported")
            try:
                # tolerate OBJ v/vt/vn syntax by keeping the vertex index
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            except ValueError as exc:
                raise MeshFormatError(f"line {ln}: {exc}") from exc
            if any(i < 0 for i in idx):
                raise MeshFormatError(f"line {ln}: face index must be >= 1")
            faces.append(idx)
        # other OBJ directives (vn, vt, o, g, s, mtllib, usemtl) are ignored
    if colors and len(colors) != len(vertices):
        raise MeshFormatError("some vertices have colors and some do not")
    if faces:
        hi = max(max(f) for f in faces)
        if hi >= len(vertices):
            raise MeshFormatError(f"index overflow: face index {hi} >= {len(vertices)}")
    return Mesh(
        np.array(vertices, dtype=np.float64).reshape(-1, 3),
        np.array(faces, dtype=np.uint32).reshape(-1, 3),
        np.array(colors, dtype=np.float64).reshape(-1, 3) if colors else None,
    )
