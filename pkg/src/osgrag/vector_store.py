"""Label-centred chunks, their embeddings, exact top-k search and the on-disk database.

File layout (all integers little-endian)::

    b"OSGV1"
    u32 header length, header JSON  {"d", "N", "encoder", "version"}
    N x ( d float32 embedding, u32 chunk length, canonical chunk JSON )
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDatabase, MalformedFile, VersionMismatch
from .facts import relation_fact
from .model_clients import EmbeddingVector
from .scene_model import SceneGraph, canonical_json, round_sig

MAGIC = b"OSGV1"
FORMAT_VERSION = 1
DEFAULT_K = 3


@dataclass(frozen=True)
class Chunk:
    label: str
    number: int
    nodes: dict  # str(id) -> {label, best_view, bbox_extent, bbox_center, description}
    relationships: dict  # "s-o" -> {subject, object, semantic, spatial}
    rendered_text: str

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "number": self.number,
            "nodes": self.nodes,
            "relationships": self.relationships,
            "rendered_text": self.rendered_text,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Chunk":
        return cls(doc["label"], int(doc["number"]), dict(doc["nodes"]), dict(doc["relationships"]), doc["rendered_text"])

    def node_ids(self) -> list[int]:
        return sorted(int(k) for k in self.nodes)


def render_chunk_text(label: str, nodes: dict, relationships: dict) -> str:
    descs = [nodes[k]["description"] or f"a {label}" for k in sorted(nodes, key=int)]
    sentences = [s for k in sorted(relationships, key=_rel_sort_key) for s in relationships[k]["semantic"]]
    text = f"{label}: " + "; ".join(descs) + "."
    if sentences:
        text += " " + ". ".join(sentences) + "."
    return text


def _rel_sort_key(key: str) -> tuple[int, int]:
    s, o = key.split("-")
    return int(s), int(o)


def _endpoint(node) -> dict:
    return {
        "id": node.id,
        "label": node.label,
        "description": node.description,
        "color_image_idx": node.best_view.frame_index,
    }


def build_chunks(graph: SceneGraph) -> list[Chunk]:
    by_label: dict[str, list[int]] = {}
    for nid, node in graph.nodes.items():
        by_label.setdefault(node.label.casefold(), []).append(nid)
    chunks = []
    for label in sorted(by_label):
        ids = by_label[label]
        nodes = {}
        for nid in ids:
            n = graph.nodes[nid]
            nodes[str(nid)] = {
                "label": n.label,
                "best_view": n.best_view.frame_index,
                "bbox_extent": [round_sig(x) for x in n.obb.extents],
                "bbox_center": [round_sig(x) for x in n.obb.center],
                "description": n.description,
            }
        rels = {}
        members = set(ids)
        for e in sorted(graph.edges, key=lambda e: (e.subject_id, e.object_id)):
            if e.subject_id not in members:
                continue
            s, o = graph.nodes[e.subject_id], graph.nodes[e.object_id]
            rels[f"{e.subject_id}-{e.object_id}"] = {
                "subject": _endpoint(s),
                "object": _endpoint(o),
                "semantic": [relation_fact(s.label, e.predicate, o.label)],
                "spatial": {"distance": round_sig(e.distance), "level": e.level},
            }
        chunks.append(Chunk(label, len(nodes), nodes, rels, render_chunk_text(label, nodes, rels)))
    return chunks


@dataclass(frozen=True)
class VectorRecord:
    embedding: EmbeddingVector
    chunk: Chunk
    record_id: int


@dataclass(frozen=True)
class VectorDatabase:
    records: tuple[VectorRecord, ...]
    dim: int
    encoder_name: str

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for i, r in enumerate(self.records):
            if r.record_id != i:
                raise ValueError("record ids must follow insertion order")
            if r.embedding.dim != self.dim:
                raise ValueError(f"record {i} has dimension {r.embedding.dim}, expected {self.dim}")

    def __len__(self) -> int:
        return len(self.records)

    def matrix(self) -> np.ndarray:
        return np.array([r.embedding.values for r in self.records]).reshape(len(self.records), self.dim)


def _as_f32(values) -> np.ndarray:
    """float32-rounded copy held as float64 so products stay exact."""
    return np.asarray(values, dtype=np.float64).astype("<f4").astype(np.float64)


def make_record(vec: EmbeddingVector, chunk: Chunk, record_id: int) -> VectorRecord:
    return VectorRecord(EmbeddingVector(_as_f32(vec.values), vec.normalized), chunk, record_id)


def index_chunks(chunks, encoder, dim: int | None = None) -> VectorDatabase:
    """Embed each chunk's text. Any client error aborts before a database exists."""
    chunks = list(chunks)
    vectors = [encoder.embed_text(c.rendered_text) for c in chunks]
    if dim is None:
        dim = vectors[0].dim if vectors else int(getattr(encoder, "dim", 0))
    records = [make_record(v, c, i) for i, (v, c) in enumerate(zip(vectors, chunks))]
    return VectorDatabase(tuple(records), dim, getattr(encoder, "encoder_name", type(encoder).__name__))


def score(query32: np.ndarray, emb: np.ndarray) -> float:
    # products of float32 values are exact in float64; fsum rounds the sum once
    return math.fsum(query32 * emb)


def search(db: VectorDatabase, query: EmbeddingVector, k: int = DEFAULT_K) -> list[tuple[VectorRecord, float]]:
    """Top-k by cosine of unit vectors, descending; ties to the lower record id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(db) == 0:
        raise EmptyDatabase("vector database is empty")
    if query.dim != db.dim:
        raise ValueError(f"query has dimension {query.dim}, database {db.dim}")
    q = _as_f32(query.values)
    scored = [(score(q, r.embedding.values), r.record_id) for r in db.records]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [(db.records[i], s) for s, i in scored[:k]]


def dumps(db: VectorDatabase) -> bytes:
    header = canonical_json(
        {"d": db.dim, "N": len(db), "encoder": db.encoder_name, "version": FORMAT_VERSION}
    )
    parts = [MAGIC, struct.pack("<I", len(header)), header]
    for r in db.records:
        parts.append(np.asarray(r.embedding.values, dtype="<f4").tobytes())
        body = canonical_json(r.chunk.to_dict())
        parts += [struct.pack("<I", len(body)), body]
    return b"".join(parts)


def loads(data: bytes) -> VectorDatabase:
    if data[: len(MAGIC)] != MAGIC:
        raise MalformedFile("bad magic bytes; not a vector database")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise MalformedFile("vector database is truncated")
        out = data[pos : pos + n]
        pos += n
        return out

    try:
        (hlen,) = struct.unpack("<I", take(4))
        header = json.loads(take(hlen))
        if header.get("version") != FORMAT_VERSION:
            raise VersionMismatch(f"file version {header.get('version')!r}, expected {FORMAT_VERSION}")
        d, n, enc = int(header["d"]), int(header["N"]), str(header["encoder"])
        records = []
        for i in range(n):
            emb = np.frombuffer(take(4 * d), dtype="<f4").astype(np.float64)
            (clen,) = struct.unpack("<I", take(4))
            chunk = Chunk.from_dict(json.loads(take(clen)))
            records.append(VectorRecord(EmbeddingVector(emb, True), chunk, i))
    except (KeyError, TypeError, ValueError, struct.error) as exc:
        if isinstance(exc, (VersionMismatch, MalformedFile)):
            raise
        raise MalformedFile(f"corrupt vector database: {exc}") from exc
    if pos != len(data):
        raise MalformedFile("trailing bytes after last record")
    return VectorDatabase(tuple(records), d, enc)


def persist(db: VectorDatabase, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(db))
    os.replace(tmp, path)


def load(path) -> VectorDatabase:
    return loads(Path(path).read_bytes())
