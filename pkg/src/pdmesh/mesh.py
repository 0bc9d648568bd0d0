"""Triangle mesh loading, normalization, quantization, and surface sampling.

Meshes live in two forms: continuous coordinates (``TriangleMesh``, unit-cube
normalized before tokenization) and integer-grid coordinates
(``QuantizedMesh``, the form the tokenizer consumes).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_RESOLUTION = 128


class MeshError(ValueError):
    pass


class ObjParseError(MeshError):
    """Raised on malformed OBJ records; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable triangle mesh: float vertices (n, 3) and int faces (m, 3)."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        if len(f) and ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any():
            raise MeshError("degenerate face (repeated vertex index)")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise MeshError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True)
class QuantizedMesh:
    """Mesh on an integer grid [0, resolution)^3 with merged vertices.

    Vertices duplicated by quantization are merged on construction and faces
    that collapse are dropped (``dropped_faces`` keeps the count).
    """

    resolution: int
    vertices: np.ndarray
    faces: np.ndarray
    dropped_faces: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.resolution < 2:
            raise MeshError("resolution must be >= 2")
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.int64).reshape(-1, 3))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        if len(v) and (v.min() < 0 or v.max() >= self.resolution):
            raise MeshError("quantized coordinate outside [0, resolution)")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        v, f, dropped = _merge_vertices(v, f)
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "dropped_faces", self.dropped_faces + dropped)

    @property
    def n_faces(self) -> int:
        return len(self.faces)


def _merge_vertices(v: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Merge duplicate integer vertices (first occurrence kept) and drop faces
    that become degenerate."""
    if len(v) == 0:
        return v, f.reshape(-1, 3), 0
    _, first_idx, inverse = np.unique(v, axis=0, return_index=True, return_inverse=True)
    # keep first-occurrence order so merging is order-stable
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    merged = v[np.sort(first_idx)]
    remap = rank[inverse.reshape(-1)]
    f2 = remap[f]
    ok = (f2[:, 0] != f2[:, 1]) & (f2[:, 1] != f2[:, 2]) & (f2[:, 0] != f2[:, 2])
    return merged, f2[ok], int((~ok).sum())


def load_obj(path: str | Path) -> TriangleMesh:
    """Parse a Wavefront OBJ file (``v``/``f`` records only, fan-triangulated).

    Raises ``ObjParseError`` with the offending line number on malformed
    records or out-of-range face indices.
    """
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            tag = fields[0]
            if tag == "v":
                if len(fields) < 4:
                    raise ObjParseError(line_no, "vertex record needs 3 coordinates")
                try:
                    vertices.append((float(fields[1]), float(fields[2]), float(fields[3])))
                except ValueError as exc:
                    raise ObjParseError(line_no, f"bad vertex coordinate: {exc}") from exc
            elif tag == "f":
                if len(fields) < 4:
                    raise ObjParseError(line_no, "face record needs >= 3 indices")
                try:
                    idx = [int(tok.split("/")[0]) for tok in fields[1:]]
                except ValueError as exc:
                    raise ObjParseError(line_no, f"bad face index: {exc}") from exc
                idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                for i in idx:
                    if i < 0 or i >= len(vertices):
                        raise ObjParseError(line_no, f"face index {i + 1} out of range")
                # fan triangulation for polygons
                for j in range(1, len(idx) - 1):
                    tri = (idx[0], idx[j], idx[j + 1])
                    if len(set(tri)) < 3:
                        raise ObjParseError(line_no, "degenerate face (repeated index)")
                    faces.append(tri)
            # all other records (vn, vt, usemtl, ...) are ignored
    try:
        return TriangleMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                            np.array(faces, dtype=np.int64).reshape(-1, 3))
    except MeshError as exc:
        raise ObjParseError(0, str(exc)) from exc


def save_obj(mesh: TriangleMesh, path: str | Path) -> None:
    """Write ``v``/``f`` records, 6 decimal places, 1-based indices."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.6f} {y:.6f} {z:.6f}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def normalize_to_unit_cube(mesh: TriangleMesh) -> TriangleMesh:
    """Uniformly scale and translate so the longest axis spans [0, 1] and the
    other axes are centered inside it. Aspect ratios are preserved."""
    if mesh.n_vertices == 0:
        raise MeshError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds()
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0.0:
        raise MeshError("degenerate bounding box (all points coincident)")
    scale = 1.0 / longest
    shifted = (mesh.vertices - lo) * scale
    center_pad = (1.0 - extent * scale) / 2.0
    return TriangleMesh(shifted + center_pad, mesh.faces)


def quantize(mesh: TriangleMesh, resolution: int = DEFAULT_RESOLUTION) -> QuantizedMesh:
    """Map [0,1]^3 coordinates to grid cells: c -> floor(c*R), clamped to R-1."""
    if resolution < 2:
        raise MeshError("resolution must be >= 2")
    grid = np.floor(mesh.vertices * resolution).astype(np.int64)
    grid = np.clip(grid, 0, resolution - 1)
    return QuantizedMesh(resolution, grid, mesh.faces)


def dequantize(qmesh: QuantizedMesh) -> TriangleMesh:
    """Reconstruct continuous coordinates at cell centers: g -> (g + 0.5)/R."""
    v = (qmesh.vertices.astype(np.float64) + 0.5) / qmesh.resolution
    return TriangleMesh(v, qmesh.faces)


def face_areas(mesh: TriangleMesh) -> np.ndarray:
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def sample_surface_points(
    mesh: TriangleMesh, n: int, seed: int, face_subset: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``n`` points uniformly over the surface (area-weighted faces,
    uniform barycentric within a face). Deterministic for a fixed seed.

    Returns ``(points (n,3), face_ids (n,))``; ``face_subset`` restricts the
    candidate faces (ids still refer to the full face list).
    """
    if mesh.n_faces == 0:
        raise MeshError("mesh has no faces to sample")
    areas = face_areas(mesh)
    face_ids = np.arange(mesh.n_faces)
    if face_subset is not None:
        face_ids = np.asarray(face_subset, dtype=np.int64)
        areas = areas[face_ids]
    total = areas.sum()
    if total <= 0.0:
        raise MeshError("zero total surface area")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(face_ids), size=n, p=areas / total)
    chosen_faces = face_ids[chosen]
    tri = mesh.vertices[mesh.faces[chosen_faces]]
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    pts = tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])
    return pts, chosen_faces
