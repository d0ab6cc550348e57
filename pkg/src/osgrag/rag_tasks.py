"""Scene-grounded tasks on top of the graph and its vector database.

* ``answer_question``  free-form QA
* ``ground_query``     text answer + best-view crop + top-down map location
* ``retrieve_instance`` text and/or image query -> one instance
* ``plan_task``        instruction -> action sequence over find/navigate/grasp/place

Prompt templates are versioned by id; the rendered prompt always contains each
context fact and the question verbatim.
"""

from __future__ import annotations

import re
from html import escape
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import EmptyInput, NoMatchingInstance, NoMentionedObjects, PlanParseFailure, UnboundTarget
from .facts import instance_fact, relation_fact
from .mock_reasoner import NOT_FOUND
from .model_clients import EmbeddingVector, cosine_similarity, mean_embedding
from .scene_model import ObjectNode, SceneGraph
from .text import STOPWORDS, norm_label, words
from .vector_store import DEFAULT_K, VectorDatabase, search

MENTION_THRESHOLD = 0.9
MAX_SPAN_WORDS = 3

TEMPLATES = {
    "qa/v1": (
        "Based on the following facts about a 3D indoor scene:\n"
        "{facts}\n"
        "Question: {question}\n"
        "Reply with a short phrase or a number. If the facts do not contain the answer, reply exactly: "
        + NOT_FOUND
    ),
    "ground/v1": (
        "Based on the following facts about a 3D indoor scene:\n"
        "{facts}\n"
        "Question: {question}\n"
        "Reply with one sentence naming the object and the fact that locates it."
    ),
    "plan/v1": (
        "Objects and relations relevant to the task:\n"
        "{facts}\n"
        "Instruction: {question}\n"
        "Reply with the actions separated by ', ' using only find(x), navigate(x), grasp(x), place(x), "
        "where x is an object label from the list above."
    ),
}


@dataclass(frozen=True)
class ContextEntry:
    label: str
    node_ids: tuple[int, ...]
    attributes: tuple[str, ...]
    relationships: tuple[str, ...]


@dataclass(frozen=True)
class RetrievedContext:
    entries: tuple[ContextEntry, ...]
    source_scores: tuple[float, ...]

    def facts(self) -> list[str]:
        out = []
        for e in self.entries:
            out += e.attributes
        for e in self.entries:
            out += e.relationships
        return out


@dataclass(frozen=True)
class GroundedPrompt:
    context_facts: tuple[str, ...]
    question: str
    template_id: str
    rendered: str


def render_prompt(facts: Sequence[str], question: str, template_id: str = "qa/v1") -> GroundedPrompt:
    facts = tuple(facts)
    body = "\n".join(f"- {f}" for f in facts)
    rendered = TEMPLATES[template_id].format(facts=body, question=question)
    return GroundedPrompt(facts, question, template_id, rendered)


def decompose(results) -> RetrievedContext:
    """Split retrieved chunks into per-instance attribute facts and relation facts."""
    entries = []
    for rec, _ in results:
        c = rec.chunk
        attrs = []
        for key in sorted(c.nodes, key=int):
            n = c.nodes[key]
            attrs.append(
                instance_fact(int(key), n["label"], n["description"], n["bbox_center"], n["bbox_extent"], n["best_view"])
            )
        rels = [s for key in sorted(c.relationships, key=lambda k: tuple(map(int, k.split("-"))))
                for s in c.relationships[key]["semantic"]]
        entries.append(ContextEntry(c.label, tuple(c.node_ids()), tuple(attrs), tuple(rels)))
    return RetrievedContext(tuple(entries), tuple(s for _, s in results))


# -- Task I -----------------------------------------------------------------


@dataclass(frozen=True)
class QaResult:
    answer: str
    context: RetrievedContext
    prompt: GroundedPrompt


def answer_question(question: str, db: VectorDatabase, encoder, completer, k: int = DEFAULT_K) -> QaResult:
    results = search(db, encoder.embed_text(question), k)
    ctx = decompose(results)
    prompt = render_prompt(ctx.facts(), question, "qa/v1")
    return QaResult(completer.complete(prompt).strip(), ctx, prompt)


# -- Task II / III ------------------------------------------------------------


@dataclass(frozen=True)
class MapLocation:
    xy: tuple[float, float]
    footprint: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    def __post_init__(self):
        x, y = self.xy
        x0, y0, x1, y1 = self.footprint
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            raise ValueError("footprint must contain xy")


def map_location(node: ObjectNode) -> MapLocation:
    corners = node.obb.corners()[:, :2]
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    c = node.obb.center
    return MapLocation((float(c[0]), float(c[1])), (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])))


def instance_text(node: ObjectNode) -> str:
    return f"{node.label}: {node.description}" if node.description else node.label


def _rerank(query: EmbeddingVector, ids, graph: SceneGraph, encoder) -> tuple[int, float]:
    best = None
    for nid in sorted(ids):
        s = cosine_similarity(query, encoder.embed_text(instance_text(graph.nodes[nid])))
        if best is None or s > best[1]:
            best = (nid, s)
    return best


@dataclass(frozen=True)
class GroundingResult:
    text: str
    node_id: int
    description: str
    crop_ref: str
    map: MapLocation
    score: float
    context: RetrievedContext
    prompt: GroundedPrompt


def ground_query(
    question: str, db: VectorDatabase, encoder, completer, graph: SceneGraph, k: int = DEFAULT_K
) -> GroundingResult:
    """Best instance inside the top chunk, plus a grounded text answer."""
    if not graph.nodes:
        raise NoMatchingInstance("scene graph has no nodes")
    q = encoder.embed_text(question)
    results = search(db, q, k)
    ids = [i for i in results[0][0].chunk.node_ids() if i in graph.nodes]
    if not ids:
        raise NoMatchingInstance("top chunk has no instance in this graph")
    nid, s = _rerank(q, ids, graph, encoder)
    node = graph.nodes[nid]
    ctx = decompose(results)
    prompt = render_prompt(ctx.facts(), question, "ground/v1")
    text = completer.complete(prompt).strip()
    return GroundingResult(text, nid, node.description, node.best_view.crop_ref, map_location(node), s, ctx, prompt)


@dataclass(frozen=True)
class RetrievalResult:
    node_id: int
    crop_ref: str
    map: MapLocation
    score: float


def query_embedding(encoder, text: str | None = None, image_ref: str | None = None) -> EmbeddingVector:
    vecs = []
    if text is not None and text.strip():
        vecs.append(encoder.embed_text(text))
    if image_ref:
        vecs.append(encoder.embed_image(image_ref))
    if not vecs:
        raise EmptyInput("retrieval needs a text or an image query")
    return vecs[0] if len(vecs) == 1 else mean_embedding(vecs)


def retrieve_instance(
    db: VectorDatabase,
    encoder,
    graph: SceneGraph,
    text: str | None = None,
    image_ref: str | None = None,
    k: int = DEFAULT_K,
) -> RetrievalResult:
    """Chunk search, then instance re-rank across the top-k chunks; ties to the lower node id."""
    q = query_embedding(encoder, text, image_ref)
    if not graph.nodes:
        raise NoMatchingInstance("scene graph has no nodes")
    ids = {i for rec, _ in search(db, q, k) for i in rec.chunk.node_ids() if i in graph.nodes}
    if not ids:
        raise NoMatchingInstance("retrieved chunks have no instance in this graph")
    nid, s = _rerank(q, ids, graph, encoder)
    node = graph.nodes[nid]
    return RetrievalResult(nid, node.best_view.crop_ref, map_location(node), s)


# -- Task IV ------------------------------------------------------------------

VERBS = ("find", "navigate", "grasp", "place")
_ACTION = re.compile(r"^(find|navigate|grasp|place)\(\s*([^()]+?)\s*\)$")


@dataclass(frozen=True)
class Action:
    verb: str
    arg: str

    def __str__(self) -> str:
        return f"{self.verb}({self.arg})"

    def normalized(self) -> tuple[str, str]:
        return self.verb, norm_label(self.arg)


@dataclass(frozen=True)
class Plan:
    steps: tuple[Action, ...]
    target_bindings: dict = field(default_factory=dict)  # argument -> node id

    def __str__(self) -> str:
        return ", ".join(str(a) for a in self.steps)


def parse_plan(reply: str) -> tuple[Action, ...]:
    text = reply.strip().strip(".")
    parts = [p.strip() for p in re.split(r",|->|→|\n|;", text) if p.strip()]
    if not parts:
        raise PlanParseFailure("empty plan reply")
    steps = []
    for p in parts:
        m = _ACTION.match(re.sub(r"^\d+[.)]\s*", "", p).lower())
        if not m:
            raise PlanParseFailure(f"step {p!r} is not one of find/navigate/grasp/place(x)")
        steps.append(Action(m.group(1), m.group(2)))
    return tuple(steps)


def plan_from_text(text: str) -> Plan:
    return Plan(parse_plan(text))


def _bind(arg: str, graph: SceneGraph) -> int | None:
    want = norm_label(arg)
    hits = [i for i, n in graph.nodes.items() if norm_label(n.label) == want]
    return min(hits) if hits else None


def _spans(instruction: str):
    toks = words(instruction)
    for n in range(1, MAX_SPAN_WORDS + 1):
        for i in range(len(toks) - n + 1):
            span = toks[i : i + n]
            if all(t in STOPWORDS for t in span):
                continue
            yield " ".join(span)


def mentioned_labels(instruction: str, graph: SceneGraph, encoder, threshold: float = MENTION_THRESHOLD) -> set[str]:
    if not instruction.strip():
        raise EmptyInput("instruction is empty")
    labels = sorted(graph.labels())
    if not labels:
        return set()
    lab_vecs = {lab: encoder.embed_text(lab) for lab in labels}
    found = set()
    for span in dict.fromkeys(_spans(instruction)):
        v = encoder.embed_text(span)
        for lab in labels:
            if lab not in found and cosine_similarity(v, lab_vecs[lab]) >= threshold:
                found.add(lab)
    return found


def extract_task_subgraph(instruction: str, graph: SceneGraph, encoder, threshold: float = MENTION_THRESHOLD) -> SceneGraph:
    """Nodes whose label the instruction mentions, plus their one-hop neighbours."""
    labels = mentioned_labels(instruction, graph, encoder, threshold)
    seeds = {i for i, n in graph.nodes.items() if n.label in labels}
    if not seeds:
        raise NoMentionedObjects(f"no scene object is mentioned in {instruction!r}")
    keep = set(seeds)
    for i in seeds:
        keep |= graph.neighbors(i)
    return graph.subgraph(keep)


def graph_facts(graph: SceneGraph) -> list[str]:
    facts = [
        instance_fact(n.id, n.label, n.description, n.obb.center, n.obb.extents, n.best_view.frame_index)
        for n in graph.nodes.values()
    ]
    for e in sorted(graph.edges, key=lambda e: (e.subject_id, e.object_id)):
        facts.append(relation_fact(graph.nodes[e.subject_id].label, e.predicate, graph.nodes[e.object_id].label))
    return facts


@dataclass(frozen=True)
class PlanResult:
    plan: Plan
    subgraph: SceneGraph
    prompt: GroundedPrompt
    reply: str


def plan_task(instruction: str, graph: SceneGraph, encoder, completer) -> PlanResult:
    if not graph.nodes:
        raise NoMentionedObjects("scene graph has no nodes")
    sub = extract_task_subgraph(instruction, graph, encoder)
    prompt = render_prompt(graph_facts(sub), instruction, "plan/v1")
    reply = completer.complete(prompt)
    steps = parse_plan(reply)
    bindings = {}
    for a in steps:
        nid = _bind(a.arg, sub)
        if nid is None:
            raise UnboundTarget(f"{a} names no object in the task subgraph")
        bindings[a.arg] = nid
    return PlanResult(Plan(steps, bindings), sub, prompt, reply)


def grammar_violations(steps: Sequence[Action]) -> list[str]:
    """Precondition check: grasp needs the robot at the object, place needs it in hand."""
    out = []
    at, holding = None, None
    for k, a in enumerate(steps):
        verb, arg = a.normalized()
        if verb not in VERBS:
            out.append(f"step {k}: unknown action {a}")
        elif verb == "navigate":
            at = arg
        elif verb == "grasp":
            if at != arg:
                out.append(f"step {k}: {a} without navigate({a.arg}) first")
            holding = arg
        elif verb == "place":
            if holding != arg:
                out.append(f"step {k}: {a} while not holding {a.arg}")
            holding = None
    return out


@dataclass(frozen=True)
class PlanReport:
    correct: bool | None
    executable: bool
    wrong_actions: tuple[str, ...]
    missing_actions: tuple[str, ...]
    reference_steps: int
    violations: tuple[str, ...] = ()


def validate_plan(plan: Plan, graph: SceneGraph | None = None, reference: Plan | None = None) -> PlanReport:
    violations = grammar_violations(plan.steps)
    if graph is not None:
        violations += [f"{a} names no scene object" for a in plan.steps if _bind(a.arg, graph) is None]
    if reference is None:
        return PlanReport(None, not violations, (), (), 0, tuple(violations))
    mine = [a.normalized() for a in plan.steps]
    ref = [a.normalized() for a in reference.steps]
    pending = Counter(ref)
    wrong = []
    for s in mine:
        if pending[s] > 0:
            pending[s] -= 1
        else:
            wrong.append(s)
    have = Counter(mine)
    missing = []
    for s in ref:
        if have[s] > 0:
            have[s] -= 1
        else:
            missing.append(s)
    fmt = lambda s: f"{s[0]}({s[1]})"
    return PlanReport(
        mine == ref,
        not violations,
        tuple(map(fmt, wrong)),
        tuple(map(fmt, missing)),
        len(ref),
        tuple(violations),
    )


# -- output ---------------------------------------------------------------------


def envelope(task: str, query, **fields) -> dict:
    doc = {
        "task": task,
        "query": query,
        "answer": None,
        "plan": None,
        "context_facts": [],
        "node_ids": [],
        "map": None,
        "crop_refs": [],
        "scores": [],
    }
    doc.update(fields)
    return doc


def map_doc(loc: MapLocation) -> dict:
    return {"xy": [round(v, 6) for v in loc.xy], "footprint": [round(v, 6) for v in loc.footprint]}


def render_map_svg(graph: SceneGraph, highlight: Sequence[int] = (), scale: float = 100.0) -> str:
    """Top-down floor rectangle with one footprint per node; highlighted nodes in red."""
    x0, y0, x1, y1 = graph.floor_bounds
    w, h = max(x1 - x0, 1e-3) * scale, max(y1 - y0, 1e-3) * scale
    # SVG y grows downward; flip so +y points up on screen
    px = lambda x: (x - x0) * scale
    py = lambda y: (y1 - y) * scale
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" viewBox="0 0 {w:.1f} {h:.1f}">',
        f'<rect x="0" y="0" width="{w:.1f}" height="{h:.1f}" fill="#f4f4f4" stroke="#333"/>',
    ]
    hl = set(highlight)
    for nid, node in graph.nodes.items():
        loc = map_location(node)
        fx0, fy0, fx1, fy1 = loc.footprint
        color = "#d62728" if nid in hl else "#1f77b4"
        out.append(
            f'<rect x="{px(fx0):.1f}" y="{py(fy1):.1f}" width="{(fx1 - fx0) * scale:.1f}" '
            f'height="{(fy1 - fy0) * scale:.1f}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>'
        )
        out.append(
            f'<text x="{px(loc.xy[0]):.1f}" y="{py(loc.xy[1]):.1f}" font-size="10" '
            f'text-anchor="middle">{escape(node.label)} #{nid}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"

