"""Scene graph data model and its canonical JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from . import SCHEMA_VERSION
from .errors import InvariantViolation, MalformedDocument
from .geometry import Obb, Pose

DEFAULT_BACKGROUND = frozenset({"floor", "ceiling", "wall"})

CLOSE_LIMIT = 0.5
MEDIUM_LIMIT = 2.0


def distance_level(distance: float) -> str:
    if distance < CLOSE_LIMIT:
        return "close"
    if distance < MEDIUM_LIMIT:
        return "medium"
    return "far"


def round_sig(x: float, digits: int = 6) -> float:
    """Round to ``digits`` significant digits (the serialized precision)."""
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialized")
    return float(format(float(x), f".{digits}g"))


@dataclass(frozen=True, eq=False)
class BestView:
    frame_index: int
    pose: Pose
    crop_ref: str = ""

    def __eq__(self, other):
        if not isinstance(other, BestView):
            return NotImplemented
        return (self.frame_index, self.crop_ref) == (other.frame_index, other.crop_ref) and self.pose == other.pose


@dataclass(frozen=True, eq=False)
class ObjectNode:
    id: int
    label: str
    description: str
    feature: tuple[float, ...]
    obb: Obb
    best_view: BestView
    confidence: tuple[float, float]
    node_category: str = "object"
    point_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "feature", tuple(float(x) for x in self.feature))
        object.__setattr__(self, "confidence", (float(self.confidence[0]), float(self.confidence[1])))
        if not self.label:
            raise InvariantViolation("label non-empty", f"node {self.id}")
        a, b = self.confidence
        if not (a > 0 and b > 0):
            raise InvariantViolation("confidence alpha > 0 and beta > 0", f"node {self.id}")

    def __eq__(self, other):
        if not isinstance(other, ObjectNode):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.description == other.description
            and self.feature == other.feature
            and self.obb == other.obb
            and self.best_view == other.best_view
            and self.confidence == other.confidence
            and self.node_category == other.node_category
            and self.point_count == other.point_count
        )

    def with_label(self, label: str, description: str) -> "ObjectNode":
        return replace(self, label=label, description=description)


@dataclass(frozen=True)
class RelationEdge:
    subject_id: int
    object_id: int
    predicates: tuple[str, ...]
    distance: float
    level: str

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(self.predicates))
        where = f"edge {self.subject_id}->{self.object_id}"
        if self.subject_id == self.object_id:
            raise InvariantViolation("subject_id != object_id", where)
        if not 1 <= len(self.predicates) <= 5:
            raise InvariantViolation("1 <= |predicates| <= 5", where)
        if len(set(self.predicates)) != len(self.predicates):
            raise InvariantViolation("no duplicate predicates", where)
        if self.level not in ("close", "medium", "far"):
            raise InvariantViolation("level in {close, medium, far}", where)

    @property
    def predicate(self) -> str:
        return self.predicates[0]


@dataclass(frozen=True)
class SceneGraph:
    nodes: dict[int, ObjectNode]
    edges: tuple[RelationEdge, ...] = ()
    feature_dim: int = 32
    frame_count: int = 0
    floor_bounds: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "nodes", dict(sorted(self.nodes.items())))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "floor_bounds", tuple(float(x) for x in self.floor_bounds))
        for key, node in self.nodes.items():
            if key != node.id:
                raise InvariantViolation("node ids unique and keyed by id", f"node {node.id}")
            if len(node.feature) != self.feature_dim:
                raise InvariantViolation("feature length equals feature_dim", f"node {node.id}")
        for e in self.edges:
            for end in (e.subject_id, e.object_id):
                if end not in self.nodes:
                    raise InvariantViolation(
                        "edge endpoint ids resolve", f"edge {e.subject_id}->{e.object_id} missing node {end}"
                    )

    def labels(self) -> set[str]:
        return {n.label for n in self.nodes.values()}

    def neighbors(self, node_id: int) -> set[int]:
        out = set()
        for e in self.edges:
            if e.subject_id == node_id:
                out.add(e.object_id)
            elif e.object_id == node_id:
                out.add(e.subject_id)
        return out

    def edge_between(self, a: int, b: int) -> RelationEdge | None:
        for e in self.edges:
            if e.subject_id == a and e.object_id == b:
                return e
        return None

    def subgraph(self, keep: Iterable[int]) -> "SceneGraph":
        keep = set(keep)
        return replace(
            self,
            nodes={i: n for i, n in self.nodes.items() if i in keep},
            edges=tuple(e for e in self.edges if e.subject_id in keep and e.object_id in keep),
        )


def filter_background(graph: SceneGraph, background_labels: Iterable[str] = DEFAULT_BACKGROUND) -> SceneGraph:
    bg = {s.casefold() for s in background_labels}
    keep = [i for i, n in graph.nodes.items() if n.label.casefold() not in bg]
    return graph.subgraph(keep)


# ---------------------------------------------------------------------------
# serialization


def _floats(values, exact: bool = False) -> list[float]:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if exact:
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite value cannot be serialized")
        return [float(x) for x in arr]
    return [round_sig(x) for x in arr]


def _pose_doc(pose: Pose) -> dict:
    # rotations keep full precision: rounding would break orthonormality
    return {"rotation": _floats(pose.rotation, exact=True), "translation": _floats(pose.translation)}


def graph_to_dict(graph: SceneGraph) -> dict:
    nodes = []
    for node in graph.nodes.values():
        bv = node.best_view
        nodes.append(
            {
                "id": node.id,
                "label": node.label,
                "description": node.description,
                "feature": _floats(node.feature),
                "bbox_center": _floats(node.obb.center),
                "bbox_extent": _floats(node.obb.extents),
                "bbox_rotation": _floats(node.obb.rotation, exact=True),
                "best_view": {"frame_index": bv.frame_index, "crop_ref": bv.crop_ref, **_pose_doc(bv.pose)},
                "confidence": _floats(node.confidence),
                "node_category": node.node_category,
                "point_count": node.point_count,
            }
        )
    edges = [
        {
            "subject": e.subject_id,
            "object": e.object_id,
            "predicates": list(e.predicates),
            "distance": round_sig(e.distance),
            "level": e.level,
        }
        for e in sorted(graph.edges, key=lambda e: (e.subject_id, e.object_id))
    ]
    return {
        "schema": SCHEMA_VERSION,
        "feature_dim": graph.feature_dim,
        "frame_count": graph.frame_count,
        "floor_bounds": _floats(graph.floor_bounds),
        "nodes": nodes,
        "edges": edges,
    }


def canonical_json(doc) -> bytes:
    return (json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(",", ":"), allow_nan=False) + "\n").encode(
        "utf-8"
    )


def serialize_graph(graph: SceneGraph) -> bytes:
    """Canonical bytes: sorted keys, 6 significant digits, nodes and edges in id order."""
    return canonical_json(graph_to_dict(graph))


def _vec(doc, key, n, where):
    try:
        v = np.asarray(doc[key], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"{where}: bad or missing field {key!r}") from exc
    if v.size != n:
        raise MalformedDocument(f"{where}: field {key!r} must have {n} numbers")
    return v


def _pose_from(doc, where) -> Pose:
    r = _vec(doc, "rotation", 9, where).reshape(3, 3)
    t = _vec(doc, "translation", 3, where)
    try:
        return Pose(r, t)
    except ValueError as exc:
        raise InvariantViolation(f"pose rotation orthonormal: {exc}", where) from exc


def graph_from_dict(doc: dict) -> SceneGraph:
    if not isinstance(doc, dict):
        raise MalformedDocument("scene graph document must be a JSON object")
    if doc.get("schema") != SCHEMA_VERSION:
        raise MalformedDocument(f"unsupported schema {doc.get('schema')!r}, expected {SCHEMA_VERSION!r}")
    try:
        raw_nodes = list(doc["nodes"])
        raw_edges = list(doc["edges"])
        feature_dim = int(doc["feature_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"missing top-level field: {exc}") from exc
    nodes: dict[int, ObjectNode] = {}
    for raw in raw_nodes:
        try:
            nid = int(raw["id"])
            where = f"node {nid}"
            bv = raw["best_view"]
            conf = _vec(raw, "confidence", 2, where)
            feature = np.asarray(raw["feature"], dtype=np.float64).ravel()
            try:
                obb = Obb(
                    _vec(raw, "bbox_center", 3, where),
                    _vec(raw, "bbox_extent", 3, where),
                    _vec(raw, "bbox_rotation", 9, where).reshape(3, 3),
                )
            except ValueError as exc:
                if isinstance(exc, MalformedDocument):
                    raise
                raise InvariantViolation(f"obb invariants: {exc}", where) from exc
            node = ObjectNode(
                id=nid,
                label=str(raw["label"]),
                description=str(raw.get("description", "")),
                feature=tuple(feature),
                obb=obb,
                best_view=BestView(int(bv["frame_index"]), _pose_from(bv, where), str(bv.get("crop_ref", ""))),
                confidence=(conf[0], conf[1]),
                node_category=str(raw.get("node_category", "object")),
                point_count=int(raw.get("point_count", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedDocument(f"malformed node entry: {exc}") from exc
        if nid in nodes:
            raise InvariantViolation("node ids unique", f"node {nid}")
        nodes[nid] = node
    edges = []
    for raw in raw_edges:
        try:
            edges.append(
                RelationEdge(
                    int(raw["subject"]),
                    int(raw["object"]),
                    tuple(str(p) for p in raw["predicates"]),
                    float(raw["distance"]),
                    str(raw["level"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvariantViolation):
                raise
            raise MalformedDocument(f"malformed edge entry: {exc}") from exc
    return SceneGraph(
        nodes=nodes,
        edges=tuple(edges),
        feature_dim=feature_dim,
        frame_count=int(doc.get("frame_count", 0)),
        floor_bounds=tuple(_vec(doc, "floor_bounds", 4, "graph")) if "floor_bounds" in doc else (0.0, 0.0, 0.0, 0.0),
    )


def deserialize_graph(data: bytes) -> SceneGraph:
    try:
        doc = json.loads(data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedDocument(f"not a JSON document: {exc}") from exc
    return graph_from_dict(doc)


def canonicalize(graph: SceneGraph) -> SceneGraph:
    """The graph as it reads back from disk (floats at serialized precision)."""
    return deserialize_graph(serialize_graph(graph))
