"""Mesh part segmentation, part adjacency, and BFS part ordering.

Segmentation here is a deterministic geometric stand-in for a learned
segmenter: seeded k-means over face centroids followed by a connectivity
split so every part is edge-connected. The module boundary accepts any
face labeling, so an external segmenter can be dropped in.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import MeshError, TriangleMesh

DEFAULT_CLUSTER_CAP = 4


@dataclass(frozen=True)
class PartLabeling:
    """Per-face part id in [0, n_parts); every id is used by >= 1 face."""

    labels: np.ndarray
    n_parts: int

    def __post_init__(self):
        lab = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if lab.ndim != 1:
            raise MeshError("labels must be a 1-D per-face array")
        if len(lab) == 0 or self.n_parts < 1:
            raise MeshError("labeling must cover at least one face and one part")
        used = np.unique(lab)
        if used.min() < 0 or used.max() >= self.n_parts or len(used) != self.n_parts:
            raise MeshError("every part id in [0, n_parts) must label >= 1 face")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)


@dataclass(frozen=True)
class PartAdjacency:
    """Symmetric, irreflexive part neighborhood relation (shared mesh edges)."""

    n_parts: int
    edges: frozenset[tuple[int, int]]  # stored as (min, max) pairs

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def neighbors(self, i: int) -> list[int]:
        out = [b if a == i else a for (a, b) in self.edges if i in (a, b)]
        return sorted(out)


@dataclass(frozen=True)
class ClusterBounds:
    k_min: int
    k_max: int
    cap: int = DEFAULT_CLUSTER_CAP

    def __post_init__(self):
        if not (1 <= self.k_min <= self.k_max <= self.cap):
            raise MeshError("cluster bounds must satisfy 1 <= k_min <= k_max <= cap")


def cluster_bounds(n_faces: int, cap: int = DEFAULT_CLUSTER_CAP) -> ClusterBounds:
    """Face-count-driven cluster range: floor(F*0.5/500) and floor(F*2.0/500),
    both capped at ``cap`` and clamped below so 1 <= k_min <= k_max."""
    if n_faces < 1 or cap < 1:
        raise MeshError("n_faces and cap must be >= 1")
    k_min = min(int(np.floor(n_faces * 0.5 / 500.0)), cap)
    k_max = min(int(np.floor(n_faces * 2.0 / 500.0)), cap)
    k_min = max(k_min, 1)
    k_max = max(k_max, k_min)
    return ClusterBounds(k_min, k_max, cap)


def face_centroids(mesh: TriangleMesh) -> np.ndarray:
    return mesh.vertices[mesh.faces].mean(axis=1)


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator, n_iter: int = 50) -> np.ndarray:
    """Seeded Lloyd k-means with farthest-point initialization."""
    n = len(points)
    centers = np.empty((k, 3))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        centers[c] = points[int(np.argmax(d2))]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(n_iter):
        dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = dists.argmin(axis=1)
        if (new_assign == assign).all():
            break
        assign = new_assign
        for c in range(k):
            sel = assign == c
            if sel.any():
                centers[c] = points[sel].mean(axis=0)
    return assign


def _mesh_edge_map(mesh: TriangleMesh) -> dict[tuple[int, int], list[int]]:
    """Undirected mesh edge -> incident face ids."""
    edge_faces: dict[tuple[int, int], list[int]] = defaultdict(list)
    for fid, (a, b, c) in enumerate(mesh.faces):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_faces[(min(u, v), max(u, v))].append(fid)
    return edge_faces


def _connected_components(face_ids: np.ndarray, edge_faces: dict) -> list[list[int]]:
    """Edge-connected components of a face set (faces adjacent iff they share
    a mesh edge)."""
    idset = set(int(f) for f in face_ids)
    adj: dict[int, set[int]] = {f: set() for f in idset}
    for fids in edge_faces.values():
        inside = [f for f in fids if f in idset]
        for i in range(len(inside)):
            for j in range(i + 1, len(inside)):
                adj[inside[i]].add(inside[j])
                adj[inside[j]].add(inside[i])
    comps = []
    seen: set[int] = set()
    for f in sorted(idset):
        if f in seen:
            continue
        comp = [f]
        seen.add(f)
        stack = [f]
        while stack:
            cur = stack.pop()
            for nxt in adj[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    comp.append(nxt)
                    stack.append(nxt)
        comps.append(sorted(comp))
    return comps


def segment_mesh(mesh: TriangleMesh, bounds: ClusterBounds, seed: int) -> PartLabeling:
    """Cluster faces by centroid k-means (k drawn uniformly in
    [k_min, k_max] under ``seed``), then split each cluster into
    edge-connected components so every final part is connected."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(bounds.k_min, bounds.k_max + 1))
    k = min(k, mesh.n_faces)
    cents = face_centroids(mesh)
    assign = _kmeans(cents, k, rng) if k > 1 else np.zeros(mesh.n_faces, dtype=np.int64)

    edge_faces = _mesh_edge_map(mesh)
    labels = np.full(mesh.n_faces, -1, dtype=np.int64)
    next_id = 0
    for c in range(k):
        members = np.flatnonzero(assign == c)
        if len(members) == 0:
            continue
        for comp in _connected_components(members, edge_faces):
            labels[comp] = next_id
            next_id += 1
    return PartLabeling(labels, next_id)


def build_adjacency(mesh: TriangleMesh, labeling: PartLabeling) -> PartAdjacency:
    """edge(i, j) iff some mesh edge is shared by a face in part i and a face
    in part j (i != j)."""
    if len(labeling.labels) != mesh.n_faces:
        raise MeshError("labeling does not cover the mesh")
    edges: set[tuple[int, int]] = set()
    for fids in _mesh_edge_map(mesh).values():
        parts = sorted(set(int(labeling.labels[f]) for f in fids))
        for i in range(len(parts)):
            for j in range(i + 1, len(parts)):
                edges.add((parts[i], parts[j]))
    return PartAdjacency(labeling.n_parts, frozenset(edges))


def bfs_part_order(adj: PartAdjacency, start: int) -> list[int]:
    """Level-order BFS from ``start``; within a frontier parts are visited in
    ascending id. Remaining components are appended by ascending lowest
    unvisited id, each traversed the same way."""
    if not (0 <= start < adj.n_parts):
        raise MeshError("start part id out of range")
    order: list[int] = []
    visited = [False] * adj.n_parts

    def run(root: int) -> None:
        visited[root] = True
        order.append(root)
        frontier = [root]
        while frontier:
            nxt = sorted({m for p in frontier for m in adj.neighbors(p) if not visited[m]})
            for m in nxt:
                visited[m] = True
            order.extend(nxt)
            frontier = nxt

    run(start)
    for p in range(adj.n_parts):
        if not visited[p]:
            run(p)
    return order


def split_into_parts(
    mesh: TriangleMesh, labeling: PartLabeling, order: list[int] | None = None
) -> list[TriangleMesh]:
    """Extract one submesh per part, in ``order`` (default: ascending id).
    Vertices are re-indexed locally; coordinates are kept global."""
    if len(labeling.labels) != mesh.n_faces:
        raise MeshError("labeling does not cover the mesh")
    if order is None:
        order = list(range(labeling.n_parts))
    if sorted(order) != list(range(labeling.n_parts)):
        raise MeshError("order must be a permutation of part ids")
    out = []
    for part in order:
        fsel = mesh.faces[labeling.labels == part]
        local_ids, remapped = np.unique(fsel, return_inverse=True)
        out.append(TriangleMesh(mesh.vertices[local_ids], remapped.reshape(-1, 3)))
    return out


def save_labeling(labeling: PartLabeling, path: str | Path) -> None:
    """Sidecar text format: header ``N=<count>`` then one part id per face line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"N={labeling.n_parts}\n")
        for lab in labeling.labels:
            fh.write(f"{lab}\n")


def load_labeling(path: str | Path) -> PartLabeling:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("N="):
            raise MeshError("labeling file missing N= header")
        n_parts = int(header[2:])
        labels = np.array([int(line) for line in fh if line.strip()], dtype=np.int64)
    return PartLabeling(labels, n_parts)
