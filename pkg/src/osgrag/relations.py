"""Edge construction: geometric pair filter, then predicate ranking per surviving pair."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

from .errors import ClientMalformedReply, ClientUnavailable, InvariantViolation
from .geometry import centroid_distance, obb_iou
from .model_clients import NodeContext, RelationQuery
from .scene_model import DEFAULT_BACKGROUND, RelationEdge, SceneGraph, distance_level

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairFilterConfig:
    use_iou: bool = True
    use_distance: bool = True
    d_thresh: float = 0.5
    require_background_filtered: bool = True

    def __post_init__(self):
        if not self.d_thresh > 0:
            raise ValueError("d_thresh must be positive")


@dataclass(frozen=True)
class CandidatePair:
    subject_id: int
    object_id: int
    iou: float
    distance: float
    passed_by: str | None  # "iou", "distance", "both", or None when no filter is on

    def __post_init__(self):
        if self.subject_id >= self.object_id:
            raise ValueError("candidate pairs are stored with subject_id < object_id")

    @property
    def key(self) -> tuple[int, int]:
        return self.subject_id, self.object_id


def _passes(iou: float, distance: float, d_thresh: float) -> tuple[bool, bool]:
    return iou > 0.0, distance < d_thresh


def _passed_by(iou_ok: bool, dist_ok: bool, cfg: PairFilterConfig) -> str | None:
    a = cfg.use_iou and iou_ok
    b = cfg.use_distance and dist_ok
    if a and b:
        return "both"
    if a:
        return "iou"
    if b:
        return "distance"
    return None


def pair_geometry(graph: SceneGraph):
    """``(i, j, iou, distance)`` for every unordered node pair, ``i < j``."""
    ids = sorted(graph.nodes)
    for i, j in combinations(ids, 2):
        a, b = graph.nodes[i].obb, graph.nodes[j].obb
        yield i, j, obb_iou(a, b), centroid_distance(a, b)


def candidate_pairs(graph: SceneGraph, cfg: PairFilterConfig = PairFilterConfig()) -> list[CandidatePair]:
    """Pairs whose boxes overlap or whose centres are closer than ``d_thresh`` (union of the enabled tests)."""
    if cfg.require_background_filtered:
        bg = [n.id for n in graph.nodes.values() if n.label.casefold() in DEFAULT_BACKGROUND]
        if bg:
            raise InvariantViolation("graph background-filtered before pair filtering", f"background nodes {bg}")
    out = []
    for i, j, iou, dist in pair_geometry(graph):
        iou_ok, dist_ok = _passes(iou, dist, cfg.d_thresh)
        by = _passed_by(iou_ok, dist_ok, cfg)
        if cfg.use_iou or cfg.use_distance:
            if by is None:
                continue
        out.append(CandidatePair(i, j, iou, dist, by))
    return out


def relation_query(graph: SceneGraph, pair: CandidatePair) -> RelationQuery:
    def ctx(nid):
        n = graph.nodes[nid]
        return NodeContext(n.id, n.label, n.description, n.best_view.crop_ref, n.obb)

    return RelationQuery(ctx(pair.subject_id), ctx(pair.object_id), pair.distance)


def extract_relations(pairs, graph: SceneGraph, relator, max_parallel: int = 1) -> list[RelationEdge]:
    """Ask the relator for ranked predicates on each pair.

    Failed calls drop the pair (logged); nothing is fabricated. Output is
    sorted by pair key regardless of completion order.
    """
    pairs = list(pairs)
    for p in pairs:
        if p.subject_id not in graph.nodes or p.object_id not in graph.nodes:
            raise InvariantViolation("pairs reference live nodes", f"pair {p.key}")

    def one(p: CandidatePair):
        try:
            preds = relator.rank_predicates(relation_query(graph, p))
        except (ClientUnavailable, ClientMalformedReply) as exc:
            log.warning("relation for pair %s dropped: %s", p.key, exc)
            return None
        return RelationEdge(p.subject_id, p.object_id, tuple(preds[:5]), p.distance, distance_level(p.distance))

    if max_parallel > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=max_parallel) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]
    return sorted((e for e in results if e is not None), key=lambda e: (e.subject_id, e.object_id))


@dataclass(frozen=True)
class AblationRow:
    use_iou: bool
    use_distance: bool
    count: int


def ablation_pair_counts(graph: SceneGraph, d_thresh: float = 0.5) -> tuple[list[AblationRow], int]:
    """Pair counts under the four filter settings, plus the size of the IoU/distance intersection."""
    rows = []
    for use_iou, use_dist in ((False, False), (True, False), (False, True), (True, True)):
        cfg = PairFilterConfig(use_iou, use_dist, d_thresh, require_background_filtered=False)
        rows.append(AblationRow(use_iou, use_dist, len(candidate_pairs(graph, cfg))))
    both = sum(
        1 for p in candidate_pairs(graph, PairFilterConfig(True, True, d_thresh, False)) if p.passed_by == "both"
    )
    return rows, both
