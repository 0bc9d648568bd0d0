"""Fan-patch mesh serialization with a dual coarse-block/offset vocabulary.

Each quantized vertex becomes two token ids: a coarse cell id (position on
the (R/B)^3 grid) and an in-cell offset id (position on the B^3 sub-grid).
Center and neighbor vertices draw from disjoint id ranges, so a center id
implicitly starts a new patch and no break token is needed. Faces are
grouped into vertex-centered fan strips; a strip with ring vertices
r_0..r_m encodes faces (center, r_j, r_j+1).

The decoder is total: arbitrary id sequences (e.g. raw model output) parse
into whatever well-formed patches they contain, with malformed fragments
dropped and counted.
"""

from __future__ import annotations

import struct
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import MeshError, QuantizedMesh

PAD_ID = 0
MASK_ID = 1

DEFAULT_BLOCK_DIM = 8
DEFAULT_L_BLOCK = 1024
DEFAULT_LEN_MIN = 128

TOKEN_FILE_MAGIC = b"PDTK"
TOKEN_FILE_VERSION = 1


class TokenizeError(MeshError):
    pass


class BlockLengthError(TokenizeError):
    """Part serialization falls outside [len_min, l_block]."""


@dataclass(frozen=True)
class TokenVocabulary:
    """Id layout: PAD, MASK, then center-block, center-offset, neighbor-block,
    neighbor-offset ranges, contiguous in that order."""

    resolution: int
    block_dim: int

    def __post_init__(self):
        if self.resolution % self.block_dim != 0:
            raise TokenizeError("block_dim must divide resolution")

    @property
    def coarse_per_axis(self) -> int:
        return self.resolution // self.block_dim

    @property
    def n_coarse(self) -> int:
        return self.coarse_per_axis**3

    @property
    def n_offset(self) -> int:
        return self.block_dim**3

    @property
    def center_block_start(self) -> int:
        return 2

    @property
    def center_offset_start(self) -> int:
        return 2 + self.n_coarse

    @property
    def neighbor_block_start(self) -> int:
        return 2 + self.n_coarse + self.n_offset

    @property
    def neighbor_offset_start(self) -> int:
        return 2 + 2 * self.n_coarse + self.n_offset

    @property
    def size(self) -> int:
        return 2 + 2 * self.n_coarse + 2 * self.n_offset

    def kind(self, token_id: int) -> str:
        """Classify an id: pad | mask | cb | co | nb | no | invalid."""
        if token_id == PAD_ID:
            return "pad"
        if token_id == MASK_ID:
            return "mask"
        for name, start, count in (
            ("cb", self.center_block_start, self.n_coarse),
            ("co", self.center_offset_start, self.n_offset),
            ("nb", self.neighbor_block_start, self.n_coarse),
            ("no", self.neighbor_offset_start, self.n_offset),
        ):
            if start <= token_id < start + count:
                return name
        return "invalid"


def _flatten(v: np.ndarray, dim: int) -> int:
    # x-major, then y, then z
    return int((v[0] * dim + v[1]) * dim + v[2])


def _unflatten(idx: int, dim: int) -> np.ndarray:
    z = idx % dim
    y = (idx // dim) % dim
    x = idx // (dim * dim)
    return np.array([x, y, z], dtype=np.int64)


def encode_vertex(v: np.ndarray, role: str, vocab: TokenVocabulary) -> tuple[int, int]:
    """Encode one quantized vertex as (coarse id, offset id) in the given
    role's ranges. ``role`` is "center" or "neighbor"."""
    v = np.asarray(v, dtype=np.int64)
    if v.min() < 0 or v.max() >= vocab.resolution:
        raise TokenizeError("vertex coordinate outside [0, resolution)")
    coarse = _flatten(v // vocab.block_dim, vocab.coarse_per_axis)
    offset = _flatten(v % vocab.block_dim, vocab.block_dim)
    if role == "center":
        return vocab.center_block_start + coarse, vocab.center_offset_start + offset
    if role == "neighbor":
        return vocab.neighbor_block_start + coarse, vocab.neighbor_offset_start + offset
    raise TokenizeError(f"unknown vertex role: {role!r}")


def decode_vertex(block_id: int, offset_id: int, role: str, vocab: TokenVocabulary) -> np.ndarray:
    if role == "center":
        coarse = block_id - vocab.center_block_start
        offset = offset_id - vocab.center_offset_start
    elif role == "neighbor":
        coarse = block_id - vocab.neighbor_block_start
        offset = offset_id - vocab.neighbor_offset_start
    else:
        raise TokenizeError(f"unknown vertex role: {role!r}")
    if not (0 <= coarse < vocab.n_coarse and 0 <= offset < vocab.n_offset):
        raise TokenizeError("token id outside the role's ranges")
    return _unflatten(coarse, vocab.coarse_per_axis) * vocab.block_dim + _unflatten(
        offset, vocab.block_dim
    )


@dataclass(frozen=True)
class Patch:
    """A fan strip: faces (center, ring[j], ring[j+1]) for j = 0..len(ring)-2.

    A closed fan repeats its first ring vertex at the end (no wraparound
    flag in the grammar)."""

    center: tuple[int, int, int]
    ring: tuple[tuple[int, int, int], ...]

    @property
    def n_faces(self) -> int:
        return len(self.ring) - 1


def _vertex_sort_key(v: np.ndarray, vocab: TokenVocabulary) -> tuple[int, int]:
    return encode_vertex(v, "center", vocab)


def patchify(part: QuantizedMesh, vocab: TokenVocabulary | None = None) -> list[Patch]:
    """Greedy fan cover of all faces.

    Repeatedly takes the vertex with the most uncovered incident faces
    (ties: smallest encoded center pair) and walks its uncovered faces into
    maximal oriented strips; each strip is one patch. Deterministic.
    """
    vocab = vocab or TokenVocabulary(part.resolution, DEFAULT_BLOCK_DIM)
    verts = part.vertices
    vkey = {i: _vertex_sort_key(verts[i], vocab) for i in range(len(verts))}

    incident: dict[int, set[int]] = defaultdict(set)
    for fid, face in enumerate(part.faces):
        for vid in face:
            incident[int(vid)].add(fid)

    uncovered: set[int] = set(range(part.n_faces))
    patches: list[Patch] = []
    while uncovered:
        # vertex with the most uncovered incident faces
        best_v, best_n = -1, 0
        for vid, fids in incident.items():
            n = len(fids)
            if n > best_n or (n == best_n and n > 0 and vkey[vid] < vkey[best_v]):
                best_v, best_n = vid, n
        patches.extend(_walk_strips(part, best_v, incident[best_v], vkey))
        for fid in list(incident[best_v]):
            for vid in part.faces[fid]:
                incident[int(vid)].discard(fid)
            uncovered.discard(fid)
    patches.sort(key=lambda p: _encode_patch_key(p, vocab))
    return patches


def _encode_patch_key(p: Patch, vocab: TokenVocabulary):
    center = encode_vertex(np.array(p.center), "center", vocab)
    ring = tuple(encode_vertex(np.array(r), "neighbor", vocab) for r in p.ring)
    return (center, ring)


def _walk_strips(part: QuantizedMesh, center: int, fids: set[int], vkey: dict) -> list[Patch]:
    """Split the faces incident to ``center`` into maximal oriented fan
    strips; orientation of each face is preserved."""
    # each face as (p, q): face cyclically rotated so center comes first
    pq: dict[int, tuple[int, int]] = {}
    by_first: dict[int, list[int]] = defaultdict(list)
    for fid in fids:
        a, b, c = (int(x) for x in part.faces[fid])
        if a == center:
            p, q = b, c
        elif b == center:
            p, q = c, a
        else:
            p, q = a, b
        pq[fid] = (p, q)
        by_first[p].append(fid)
    for lst in by_first.values():
        lst.sort(key=lambda f: (vkey[pq[f][0]], vkey[pq[f][1]]))

    remaining = set(fids)
    strips: list[Patch] = []
    while remaining:
        starts = [f for f in remaining if not any(pq[g][1] == pq[f][0] for g in remaining)]
        if starts:
            start = min(starts, key=lambda f: (vkey[pq[f][0]], vkey[pq[f][1]]))
        else:  # pure cycle (closed fan): break it deterministically
            start = min(remaining, key=lambda f: (vkey[pq[f][0]], vkey[pq[f][1]]))
        chain = [start]
        remaining.discard(start)
        while True:
            q = pq[chain[-1]][1]
            nxts = [g for g in by_first.get(q, []) if g in remaining]
            if not nxts:
                break
            chain.append(nxts[0])
            remaining.discard(nxts[0])
        ring = [pq[chain[0]][0]] + [pq[f][1] for f in chain]
        strips.append(
            Patch(
                tuple(int(x) for x in part.vertices[center]),
                tuple(tuple(int(x) for x in part.vertices[r]) for r in ring),
            )
        )
    return strips


def tokens_for_patches(patches: list[Patch], vocab: TokenVocabulary) -> list[int]:
    ids: list[int] = []
    for p in patches:
        ids.extend(encode_vertex(np.array(p.center), "center", vocab))
        for r in p.ring:
            ids.extend(encode_vertex(np.array(r), "neighbor", vocab))
    return ids


def tokenize_part(
    part: QuantizedMesh,
    vocab: TokenVocabulary,
    l_block: int = DEFAULT_L_BLOCK,
    len_min: int = DEFAULT_LEN_MIN,
) -> np.ndarray:
    """Serialize one part submesh into a PAD-filled block of ``l_block`` ids.

    Raises ``BlockLengthError`` when the unpadded length falls outside
    [len_min, l_block]; callers treat that as a rejected sample.
    """
    ids = tokens_for_patches(patchify(part, vocab), vocab)
    if not block_length_ok(len(ids), l_block, len_min):
        raise BlockLengthError(
            f"part serializes to {len(ids)} tokens, outside [{len_min}, {l_block}]"
        )
    out = np.full(l_block, PAD_ID, dtype=np.int64)
    out[: len(ids)] = ids
    return out


def block_length_ok(length: int, l_block: int, len_min: int) -> bool:
    """Accept unpadded block lengths in [len_min, l_block] (inclusive)."""
    return len_min <= length <= l_block


def detokenize_part(seq: np.ndarray, vocab: TokenVocabulary) -> tuple[QuantizedMesh, int]:
    """Parse a token block back into a quantized submesh. Total: tolerates
    arbitrary ids, dropping malformed fragments (dangling half-vertices,
    rings shorter than 2, out-of-place ids) and counting them."""
    ids = [int(t) for t in np.asarray(seq).reshape(-1) if t not in (PAD_ID, MASK_ID)]
    malformed = 0
    verts: list[tuple[int, int, int]] = []
    vert_index: dict[tuple[int, int, int], int] = {}
    faces: list[tuple[int, int, int]] = []

    def vid(coord: np.ndarray) -> int:
        key = (int(coord[0]), int(coord[1]), int(coord[2]))
        if key not in vert_index:
            vert_index[key] = len(verts)
            verts.append(key)
        return vert_index[key]

    center: int | None = None
    ring: list[int] = []

    def close_patch():
        nonlocal malformed, center, ring
        if center is not None and len(ring) < 2:
            malformed += 1
        center, ring = None, []

    i = 0
    while i < len(ids):
        k = vocab.kind(ids[i])
        if k == "cb":
            nxt = vocab.kind(ids[i + 1]) if i + 1 < len(ids) else None
            if nxt == "co":
                close_patch()
                center = vid(decode_vertex(ids[i], ids[i + 1], "center", vocab))
                i += 2
            else:
                malformed += 1  # dangling center half-vertex
                i += 1
        elif k == "nb" and center is not None:
            nxt = vocab.kind(ids[i + 1]) if i + 1 < len(ids) else None
            if nxt == "no":
                ring.append(vid(decode_vertex(ids[i], ids[i + 1], "neighbor", vocab)))
                if len(ring) >= 2:
                    faces.append((center, ring[-2], ring[-1]))
                i += 2
            else:
                malformed += 1  # dangling neighbor half-vertex
                i += 1
        else:
            malformed += 1  # stray id out of grammar position
            i += 1
    close_patch()

    # drop faces that reference identical coordinates (model can emit them)
    clean = [f for f in faces if len(set(f)) == 3]
    vcount = len(verts)
    varr = np.array(verts, dtype=np.int64).reshape(-1, 3)
    farr = np.array(clean, dtype=np.int64).reshape(-1, 3)
    if vcount == 0:
        return QuantizedMesh(vocab.resolution, np.zeros((0, 3), np.int64), farr), malformed
    return QuantizedMesh(vocab.resolution, varr, farr), malformed


def assemble_blocks(blocks: list[np.ndarray], l_block: int) -> np.ndarray:
    """Concatenate per-part blocks into one sequence (exact inverse of
    ``split_sequence``)."""
    for b in blocks:
        if len(b) != l_block:
            raise TokenizeError(f"block length {len(b)} != l_block {l_block}")
    if not blocks:
        raise TokenizeError("no blocks to assemble")
    return np.concatenate([np.asarray(b, dtype=np.int64) for b in blocks])


def split_sequence(seq: np.ndarray, l_block: int) -> list[np.ndarray]:
    seq = np.asarray(seq, dtype=np.int64).reshape(-1)
    if len(seq) == 0 or len(seq) % l_block != 0:
        raise TokenizeError(f"sequence length {len(seq)} not divisible by l_block {l_block}")
    return [seq[i : i + l_block] for i in range(0, len(seq), l_block)]


def strip_padding(block: np.ndarray) -> np.ndarray:
    """Remove trailing PADs from one block."""
    block = np.asarray(block, dtype=np.int64).reshape(-1)
    nz = np.flatnonzero(block != PAD_ID)
    return block[: nz[-1] + 1] if len(nz) else block[:0]


def save_tokens(path: str | Path, blocks: list[np.ndarray], l_block: int) -> None:
    """Binary token file: 16-byte header (magic, version, l_block, n_blocks),
    then little-endian u32 ids."""
    seq = assemble_blocks(blocks, l_block)
    with open(path, "wb") as fh:
        fh.write(TOKEN_FILE_MAGIC)
        fh.write(struct.pack("<III", TOKEN_FILE_VERSION, l_block, len(blocks)))
        fh.write(seq.astype("<u4").tobytes())


def load_tokens(path: str | Path) -> tuple[list[np.ndarray], int]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TOKEN_FILE_MAGIC:
            raise TokenizeError(f"bad token file magic: {magic!r}")
        version, l_block, n_blocks = struct.unpack("<III", fh.read(12))
        if version != TOKEN_FILE_VERSION:
            raise TokenizeError(f"unsupported token file version {version}")
        data = np.frombuffer(fh.read(4 * l_block * n_blocks), dtype="<u4").astype(np.int64)
    if len(data) != l_block * n_blocks:
        raise TokenizeError("token file truncated")
    return split_sequence(data, l_block), l_block


def dump_tokens_text(path: str | Path, blocks: list[np.ndarray]) -> None:
    """Debug dump: one id per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for b in blocks:
            for t in np.asarray(b).reshape(-1):
                fh.write(f"{int(t)}\n")


def face_multiset(qmesh: QuantizedMesh) -> tuple:
    """Canonical multiset of faces as coordinate triples, each face rotated
    cyclically so its smallest vertex comes first. Used for round-trip
    comparisons."""
    out = []
    for face in qmesh.faces:
        coords = [tuple(int(x) for x in qmesh.vertices[i]) for i in face]
        k = min(range(3), key=lambda j: coords[j])
        out.append(tuple(coords[k:] + coords[:k]))
    return tuple(sorted(out))
