"""Scoring: graph recall against ground truth, QA accuracy, plan metrics, filter ablation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import EmptyInput
from .geometry import obb_iou
from .model_clients import cosine_similarity
from .predicates import inverse_predicate
from .relations import PairFilterConfig, ablation_pair_counts, candidate_pairs, extract_relations
from .scene_model import SceneGraph
from .text import normalize_answer

ASSIGN_IOU_FLOOR = 0.25


@dataclass(frozen=True)
class MatchConfig:
    object_threshold: float = 0.95
    predicate_threshold: float = 0.9
    encoder: object = None

    def __post_init__(self):
        for name in ("object_threshold", "predicate_threshold"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")


class _Matcher:
    """labels_match with an embedding cache, one per evaluation."""

    def __init__(self, encoder):
        self.encoder = encoder
        self._cache = {}

    def _vec(self, s):
        v = self._cache.get(s)
        if v is None:
            v = self._cache[s] = self.encoder.embed_text(s)
        return v

    def __call__(self, pred: str, gt: str, threshold: float) -> bool:
        if not pred.strip() or not gt.strip():
            raise EmptyInput("labels to compare must be non-empty")
        if pred.strip().lower() == gt.strip().lower():
            return True
        if self.encoder is None:
            return False
        return cosine_similarity(self._vec(pred), self._vec(gt)) >= threshold


def labels_match(pred: str, gt: str, threshold: float, encoder) -> bool:
    return _Matcher(encoder)(pred, gt, threshold)


def assign_nodes(pred: SceneGraph, gt: SceneGraph, iou_floor: float = ASSIGN_IOU_FLOOR) -> dict[int, int]:
    """Greedy one-to-one GT -> predicted assignment by descending box IoU, IoU above the floor."""
    cands = []
    for g, gn in gt.nodes.items():
        for p, pn in pred.nodes.items():
            iou = obb_iou(gn.obb, pn.obb)
            if iou > iou_floor:
                cands.append((-iou, g, p))
    cands.sort()
    out, used = {}, set()
    for _, g, p in cands:
        if g not in out and p not in used:
            out[g] = p
            used.add(p)
    return out


def predicted_predicates(pred: SceneGraph, ps: int, po: int) -> list[str] | None:
    """Ranked predicates for ``ps -> po``; a reversed edge is read through the inverse table."""
    e = pred.edge_between(ps, po)
    if e is not None:
        return list(e.predicates)
    e = pred.edge_between(po, ps)
    if e is not None:
        return [q for q in (inverse_predicate(p) for p in e.predicates) if q is not None]
    return None


def _ratio(hits: int, total: int, empty: float = 1.0) -> float:
    return hits / total if total else empty


def _object_hits(pred, gt, assign, cfg, match):
    log = []
    for g, gn in gt.nodes.items():
        p = assign.get(g)
        ok = p is not None and match(pred.nodes[p].label, gn.label, cfg.object_threshold)
        log.append({"kind": "object", "gt": g, "pred": p, "hit": ok})
    return log


def _edge_hits(pred, gt, assign, k, cfg, match):
    log = []
    for e in sorted(gt.edges, key=lambda e: (e.subject_id, e.object_id)):
        ps, po = assign.get(e.subject_id), assign.get(e.object_id)
        preds = predicted_predicates(pred, ps, po) if ps is not None and po is not None else None
        pred_hit = preds is not None and any(match(p, e.predicate, cfg.predicate_threshold) for p in preds[:k])
        labels_ok = (
            ps is not None
            and po is not None
            and match(pred.nodes[ps].label, gt.nodes[e.subject_id].label, cfg.object_threshold)
            and match(pred.nodes[po].label, gt.nodes[e.object_id].label, cfg.object_threshold)
        )
        log.append(
            {
                "kind": "edge",
                "k": k,
                "gt": [e.subject_id, e.object_id],
                "pred": None if ps is None or po is None else [ps, po],
                "gt_predicate": e.predicate,
                "spatially_matched": ps is not None and po is not None,
                "predicate_hit": pred_hit,
                "triple_hit": bool(pred_hit and labels_ok),
            }
        )
    return log


def object_recall_at_k(pred: SceneGraph, gt: SceneGraph, k: int, cfg: MatchConfig, assign=None) -> float:
    # one label per node, so every k behaves like k = 1
    assign = assign_nodes(pred, gt) if assign is None else assign
    log = _object_hits(pred, gt, assign, cfg, _Matcher(cfg.encoder))
    return _ratio(sum(r["hit"] for r in log), len(log))


def predicate_recall_at_k(pred: SceneGraph, gt: SceneGraph, k: int, cfg: MatchConfig, assign=None) -> float:
    assign = assign_nodes(pred, gt) if assign is None else assign
    log = [r for r in _edge_hits(pred, gt, assign, k, cfg, _Matcher(cfg.encoder)) if r["spatially_matched"]]
    return _ratio(sum(r["predicate_hit"] for r in log), len(log), 1.0 if not gt.edges else 0.0)


def relationship_recall_at_k(pred: SceneGraph, gt: SceneGraph, k: int, cfg: MatchConfig, assign=None) -> float:
    assign = assign_nodes(pred, gt) if assign is None else assign
    log = _edge_hits(pred, gt, assign, k, cfg, _Matcher(cfg.encoder))
    return _ratio(sum(r["triple_hit"] for r in log), len(log))


@dataclass(frozen=True)
class EvalReport:
    object_recall: dict
    predicate_recall: dict
    relationship_recall: dict
    assignment: dict = field(default_factory=dict)
    log: tuple = ()

    def to_dict(self) -> dict:
        return {
            "object_recall": {f"R@{k}": v for k, v in self.object_recall.items()},
            "predicate_recall": {f"R@{k}": v for k, v in self.predicate_recall.items()},
            "relationship_recall": {f"R@{k}": v for k, v in self.relationship_recall.items()},
            "assignment": {str(g): p for g, p in sorted(self.assignment.items())},
            "log": list(self.log),
        }

    def table(self) -> str:
        rows = [("metric", "R@1", "R@3")]
        rows.append(("object", f"{self.object_recall[1]:.4f}", "-"))
        rows.append(("predicate", f"{self.predicate_recall[1]:.4f}", f"{self.predicate_recall[3]:.4f}"))
        rows.append(("relationship", f"{self.relationship_recall[1]:.4f}", f"{self.relationship_recall[3]:.4f}"))
        return _table(rows)


def _table(rows) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def evaluate(pred: SceneGraph, gt: SceneGraph, cfg: MatchConfig) -> EvalReport:
    assign = assign_nodes(pred, gt)
    match = _Matcher(cfg.encoder)
    obj_log = _object_hits(pred, gt, assign, cfg, match)
    logs = {k: _edge_hits(pred, gt, assign, k, cfg, match) for k in (1, 3)}
    pred_r, rel_r = {}, {}
    for k, log in logs.items():
        matched = [r for r in log if r["spatially_matched"]]
        pred_r[k] = _ratio(sum(r["predicate_hit"] for r in matched), len(matched), 1.0 if not gt.edges else 0.0)
        rel_r[k] = _ratio(sum(r["triple_hit"] for r in log), len(log))
    return EvalReport(
        {1: _ratio(sum(r["hit"] for r in obj_log), len(obj_log))},
        pred_r,
        rel_r,
        assign,
        tuple(obj_log + logs[1] + logs[3]),
    )


# -- task scoring -------------------------------------------------------------

_NUMBER_WORDS = {
    w: i
    for i, w in enumerate(
        "zero one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen "
        "sixteen seventeen eighteen nineteen twenty".split()
    )
}


def _as_number(text: str) -> float | None:
    t = normalize_answer(text)
    if t in _NUMBER_WORDS:
        return float(_NUMBER_WORDS[t])
    m = re.fullmatch(r"-?\d+(?:\.\d+)?", text.strip().lower().rstrip("."))
    return float(m.group(0)) if m else None


def qa_hit(predicted: str, gold: str) -> bool:
    g = _as_number(gold)
    if g is not None:
        p = _as_number(predicted)
        if p is not None:
            return p == g
    return normalize_answer(predicted) == normalize_answer(gold)


def qa_accuracy(answers) -> float:
    answers = list(answers)
    if not answers:
        return 0.0
    return sum(qa_hit(p, g) for p, g in answers) / len(answers)


def planning_metrics(reports) -> dict:
    """Corr/Exec over plans, WAct/MAct over reference steps; all percentages from exact fractions."""
    reports = list(reports)
    n = len(reports)
    ref_steps = sum(r.reference_steps for r in reports)

    def pct(num, den):
        return float(Fraction(num, den) * 100) if den else 0.0

    return {
        "Corr": pct(sum(bool(r.correct) for r in reports), n),
        "Exec": pct(sum(r.executable for r in reports), n),
        "WAct": pct(sum(len(r.wrong_actions) for r in reports), ref_steps),
        "MAct": pct(sum(len(r.missing_actions) for r in reports), ref_steps),
    }


# -- ablation -----------------------------------------------------------------


@dataclass(frozen=True)
class AblationRun:
    use_iou: bool
    use_distance: bool
    pair_count: int
    predicate_recall: dict
    relationship_recall: dict


@dataclass(frozen=True)
class AblationReport:
    runs: tuple[AblationRun, ...]
    intersection: int

    def to_dict(self) -> dict:
        return {
            "intersection": self.intersection,
            "runs": [
                {
                    "iou": r.use_iou,
                    "distance": r.use_distance,
                    "pairs": r.pair_count,
                    "predicate_recall": {f"R@{k}": v for k, v in r.predicate_recall.items()},
                    "relationship_recall": {f"R@{k}": v for k, v in r.relationship_recall.items()},
                }
                for r in self.runs
            ],
        }

    def table(self) -> str:
        rows = [("IoU", "Distance", "pairs", "pred R@1", "pred R@3", "rel R@1", "rel R@3")]
        for r in self.runs:
            rows.append(
                (
                    "on" if r.use_iou else "off",
                    "on" if r.use_distance else "off",
                    r.pair_count,
                    f"{r.predicate_recall[1]:.4f}",
                    f"{r.predicate_recall[3]:.4f}",
                    f"{r.relationship_recall[1]:.4f}",
                    f"{r.relationship_recall[3]:.4f}",
                )
            )
        return _table(rows)


def run_ablation(
    gt: SceneGraph, relator, cfg: MatchConfig, d_thresh: float = 0.5, nodes: SceneGraph | None = None
) -> AblationReport:
    """Relation extraction under the four filter settings, each scored against ``gt``.

    ``nodes`` is the foreground node set to relate (default: the GT nodes).
    """
    base = replace(nodes if nodes is not None else gt, edges=())
    rows, both = ablation_pair_counts(base, d_thresh)
    runs = []
    for row in rows:
        pcfg = PairFilterConfig(row.use_iou, row.use_distance, d_thresh, require_background_filtered=False)
        edges = extract_relations(candidate_pairs(base, pcfg), base, relator)
        rep = evaluate(replace(base, edges=tuple(edges)), gt, cfg)
        runs.append(AblationRun(row.use_iou, row.use_distance, row.count, rep.predicate_recall, rep.relationship_recall))
    return AblationReport(tuple(runs), both)
