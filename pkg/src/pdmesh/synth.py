"""Parametric multi-part test shapes with ground-truth part labelings.

Four families: stacked boxes, L-brackets, tables (top + 4 legs), and
dumbbells (2 spheres + bar). Parts are built as separate primitives and
welded by exact coordinate coincidence, so abutting boxes share rim
vertices (and hence mesh edges, giving a nonempty part adjacency).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import TriangleMesh, save_obj
from .parts import PartLabeling, save_labeling

FAMILIES = ("stacked-boxes", "l-bracket", "table", "dumbbell")


def box(lo, hi) -> TriangleMesh:
    """Axis-aligned box with 8 vertices and 12 consistently-oriented faces."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    v = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ]
    )
    quads = [
        (0, 3, 2, 1),  # bottom (z0)
        (4, 5, 6, 7),  # top (z1)
        (0, 1, 5, 4),  # front (y0)
        (2, 3, 7, 6),  # back (y1)
        (0, 4, 7, 3),  # left (x0)
        (1, 2, 6, 5),  # right (x1)
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(v, np.array(faces))


def uv_sphere(center, radius, n_lon: int = 6, n_lat: int = 4) -> TriangleMesh:
    """Latitude/longitude sphere with triangle caps."""
    cx, cy, cz = center
    verts = [(cx, cy, cz + radius)]
    for i in range(1, n_lat):
        phi = np.pi * i / n_lat
        for j in range(n_lon):
            theta = 2 * np.pi * j / n_lon
            verts.append(
                (
                    cx + radius * np.sin(phi) * np.cos(theta),
                    cy + radius * np.sin(phi) * np.sin(theta),
                    cz + radius * np.cos(phi),
                )
            )
    verts.append((cx, cy, cz - radius))
    south = len(verts) - 1
    faces = []
    ring = lambda i: 1 + (i - 1) * n_lon  # first vertex of latitude ring i
    for j in range(n_lon):
        faces.append((0, ring(1) + j, ring(1) + (j + 1) % n_lon))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a = ring(i) + j
            b = ring(i) + (j + 1) % n_lon
            c = ring(i + 1) + (j + 1) % n_lon
            d = ring(i + 1) + j
            faces.append((a, d, c))
            faces.append((a, c, b))
    for j in range(n_lon):
        faces.append((south, ring(n_lat - 1) + (j + 1) % n_lon, ring(n_lat - 1) + j))
    return TriangleMesh(np.array(verts), np.array(faces))


def weld_parts(parts: list[TriangleMesh]) -> tuple[TriangleMesh, PartLabeling]:
    """Concatenate part meshes into one mesh, merging exactly-coincident
    vertices across parts; faces keep their source part as the label."""
    all_v = np.concatenate([p.vertices for p in parts])
    offsets = np.cumsum([0] + [p.n_vertices for p in parts])
    all_f = np.concatenate([p.faces + offsets[i] for i, p in enumerate(parts)])
    labels = np.concatenate(
        [np.full(p.n_faces, i, dtype=np.int64) for i, p in enumerate(parts)]
    )
    _, first_idx, inverse = np.unique(all_v, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    merged_v = all_v[np.sort(first_idx)]
    remap = rank[inverse.reshape(-1)]
    mesh = TriangleMesh(merged_v, remap[all_f])
    return mesh, PartLabeling(labels, len(parts))


def make_stacked_boxes(rng: np.random.Generator) -> tuple[TriangleMesh, PartLabeling]:
    w = rng.uniform(0.6, 1.2)
    d = rng.uniform(0.6, 1.2)
    h0 = rng.uniform(0.4, 0.9)
    h1 = rng.uniform(0.4, 0.9)
    lower = box((0, 0, 0), (w, d, h0))
    upper = box((0, 0, h0), (w, d, h0 + h1))
    return weld_parts([lower, upper])


def make_l_bracket(rng: np.random.Generator) -> tuple[TriangleMesh, PartLabeling]:
    arm = rng.uniform(1.6, 2.4)
    t = rng.uniform(0.5, 0.8)
    d = rng.uniform(0.5, 0.9)
    horizontal = box((0, 0, 0), (arm, d, t))
    vertical = box((0, 0, t), (t, d, t + arm))
    return weld_parts([horizontal, vertical])


def make_table(rng: np.random.Generator) -> tuple[TriangleMesh, PartLabeling]:
    w = rng.uniform(1.4, 2.0)
    d = rng.uniform(0.9, 1.6)
    h = rng.uniform(0.8, 1.2)
    top_t = rng.uniform(0.1, 0.18)
    leg = rng.uniform(0.12, 0.2)
    top = box((0, 0, h), (w, d, h + top_t))
    legs = [
        box((x, y, 0), (x + leg, y + leg, h))
        for x in (0.0, w - leg)
        for y in (0.0, d - leg)
    ]
    return weld_parts([top] + legs)


def make_dumbbell(rng: np.random.Generator) -> tuple[TriangleMesh, PartLabeling]:
    r = rng.uniform(0.4, 0.6)
    bar_len = rng.uniform(1.2, 1.8)
    bar_r = rng.uniform(0.1, 0.18)
    left = uv_sphere((0, 0, 0), r)
    right = uv_sphere((bar_len + 2 * r, 0, 0), r)
    bar = box((r, -bar_r, -bar_r), (r + bar_len + 2 * r - r, bar_r, bar_r))
    return weld_parts([left, bar, right])


_BUILDERS = {
    "stacked-boxes": make_stacked_boxes,
    "l-bracket": make_l_bracket,
    "table": make_table,
    "dumbbell": make_dumbbell,
}


def make_shape(family: str, rng: np.random.Generator) -> tuple[TriangleMesh, PartLabeling]:
    if family not in _BUILDERS:
        raise ValueError(f"unknown shape family {family!r}; choose from {FAMILIES}")
    return _BUILDERS[family](rng)


def synth_corpus(
    count: int,
    families: list[str],
    seed: int,
    out_dir: str | Path,
) -> list[str]:
    """Generate ``count`` shapes cycling through ``families`` with seeded
    parameter jitter; writes ``<id>.obj`` plus a ``<id>.labels`` sidecar.
    Returns the mesh ids."""
    if count < 1:
        raise ValueError("count must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(count):
        family = families[i % len(families)]
        rng = np.random.default_rng((seed, i))
        mesh, labeling = make_shape(family, rng)
        mesh_id = f"{family}_{i:04d}"
        save_obj(mesh, out_dir / f"{mesh_id}.obj")
        save_labeling(labeling, out_dir / f"{mesh_id}.labels")
        ids.append(mesh_id)
    return ids
