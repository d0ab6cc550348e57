"""Seeded box worlds with exact ground truth, ray-cast RGB-D frames, and brute-force oracles."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import PlacementOverflow
from .frames import write_frame
from .fusion import Detection2D, FrameObservation
from .geometry import CameraIntrinsics, Obb, Pose, centroid_distance, invert_pose, look_at, obbs_separated, yaw_rotation
from .predicates import RelationRules, rests_on, spatial_predicates
from .scene_model import BestView, ObjectNode, RelationEdge, SceneGraph, distance_level, graph_to_dict, canonical_json

DEFAULT_VOCABULARY = (
    "chair", "table", "book", "mug", "shelf", "sofa", "box", "lamp", "plant", "bottle", "vase", "pillow",
)
COLORS = {
    "red": (200, 40, 40),
    "blue": (40, 70, 200),
    "green": (40, 160, 60),
    "yellow": (220, 200, 40),
    "white": (235, 235, 235),
    "black": (30, 30, 30),
    "brown": (130, 80, 40),
    "gray": (128, 128, 128),
    "orange": (240, 140, 30),
    "purple": (130, 50, 160),
}
FLOOR_COLOR = (180, 170, 150)
MIN_EXTENT, MAX_EXTENT = 0.2, 0.45
AMBIGUOUS_BAND = (0.45, 0.55)
STACK_MARGIN = 0.02
FLOOR_THICKNESS = 0.1
MAX_TRIES = 4000


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    object_count: int = 8
    label_vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY
    room_extent: tuple[float, float, float] = (3.0, 3.0, 2.5)
    relation_rules: RelationRules = field(default_factory=RelationRules)
    stack_probability: float = 0.35
    include_floor: bool = True
    feature_dim: int = 32

    def __post_init__(self):
        if self.object_count < 1:
            raise ValueError("object_count must be >= 1")
        if any(not e > 0 for e in self.room_extent):
            raise ValueError("room_extent must be positive")
        if not self.label_vocabulary:
            raise ValueError("label_vocabulary is empty")
        if self.object_count + int(self.include_floor) > self.feature_dim:
            raise ValueError("feature_dim too small for one-hot object features")


@dataclass(frozen=True)
class Surface:
    """An analytic box in the world, with what a perfect detector would say about it."""

    obb: Obb
    label: str
    description: str
    color: tuple[int, int, int]
    feature_index: int
    node_id: int | None  # None for background slabs


@dataclass(frozen=True)
class GroundTruthScene:
    spec: SceneSpec
    graph: SceneGraph
    surfaces: tuple[Surface, ...]


def _onehot(i: int, dim: int) -> tuple[float, ...]:
    v = [0.0] * dim
    v[i] = 1.0
    return tuple(v)


def gt_edges(boxes: dict[int, Obb], rules: RelationRules) -> list[RelationEdge]:
    """Edges for every pair that is close or stacked, phrased lower id -> higher id."""
    out = []
    for i, j in combinations(sorted(boxes), 2):
        a, b = boxes[i], boxes[j]
        d = centroid_distance(a, b)
        if d < rules.near or rests_on(a, b, rules.on_tol) or rests_on(b, a, rules.on_tol):
            out.append(RelationEdge(i, j, tuple(spatial_predicates(a, b, rules)), d, distance_level(d)))
    return out


def generate_scene(spec: SceneSpec) -> GroundTruthScene:
    rng = np.random.default_rng(spec.seed)
    wx, wy, wz = spec.room_extent
    margin = 0.3
    boxes: list[Obb] = []
    supports: list[int | None] = []  # index of the box underneath, None on the floor
    labels: list[str] = []
    colors: list[str] = []
    used_colors: dict[str, set] = {}
    color_names = list(COLORS)
    for k in range(spec.object_count):
        label = str(spec.label_vocabulary[int(rng.integers(len(spec.label_vocabulary)))])
        free = [c for c in color_names if c not in used_colors.get(label, set())]
        if not free:
            raise PlacementOverflow(f"more than {len(color_names)} instances of {label!r}")
        color = free[int(rng.integers(len(free)))]
        for _ in range(MAX_TRIES):
            ext = rng.uniform(MIN_EXTENT, MAX_EXTENT, size=3)
            rot = yaw_rotation(float(rng.uniform(0.0, math.pi)))
            below = None
            open_supports = [i for i in range(len(boxes)) if supports[i] is None and i not in supports]
            if open_supports and rng.uniform() < spec.stack_probability:
                below = open_supports[int(rng.integers(len(open_supports)))]
                b = boxes[below]
                off = (rng.uniform(-0.5, 0.5, size=2) * np.maximum(b.extents[:2] - 2 * STACK_MARGIN, 0.0))
                xy = b.center[:2] + b.rotation[:2, :2] @ off
                z = b.center[2] + b.extents[2] / 2 + ext[2] / 2 + 1e-6
            else:
                xy = np.array([rng.uniform(margin, wx - margin), rng.uniform(margin, wy - margin)])
                z = ext[2] / 2
            if z + ext[2] / 2 > wz:
                continue
            cand = Obb(np.array([xy[0], xy[1], z]), ext, rot)
            lo, hi = cand.aabb()
            if lo[0] < 0 or lo[1] < 0 or hi[0] > wx or hi[1] > wy:
                continue
            if any(not obbs_separated(cand, o) for o in boxes):
                continue
            dists = [centroid_distance(cand, o) for o in boxes]
            if any(AMBIGUOUS_BAND[0] <= d <= AMBIGUOUS_BAND[1] for d in dists):
                continue
            if below is not None and dists[below] >= AMBIGUOUS_BAND[0]:
                continue
            break
        else:
            raise PlacementOverflow(f"could not place object {k} of {spec.object_count} after {MAX_TRIES} tries")
        boxes.append(cand)
        supports.append(below)
        labels.append(label)
        colors.append(color)
        used_colors.setdefault(label, set()).add(color)
    surfaces = []
    nodes = {}
    for k, (box, label, color) in enumerate(zip(boxes, labels, colors)):
        desc = f"a {color} {label}"
        surfaces.append(Surface(box, label, desc, COLORS[color], k, k))
        nodes[k] = ObjectNode(
            id=k,
            label=label,
            description=desc,
            feature=_onehot(k, spec.feature_dim),
            obb=box,
            best_view=BestView(0, Pose.identity(), ""),
            confidence=(1.0, 1.0),
        )
    if spec.include_floor:
        floor = Obb(np.array([wx / 2, wy / 2, -FLOOR_THICKNESS / 2]), np.array([wx, wy, FLOOR_THICKNESS]), np.eye(3))
        surfaces.append(Surface(floor, "floor", "the floor", FLOOR_COLOR, spec.object_count, None))
    edges = gt_edges({k: b for k, b in enumerate(boxes)}, spec.relation_rules)
    graph = SceneGraph(nodes, tuple(edges), spec.feature_dim, 0, (0.0, 0.0, wx, wy))
    return GroundTruthScene(spec, graph, tuple(surfaces))


# -- rendering ------------------------------------------------------------------


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(240.0, 240.0, 159.5, 119.5, 320, 240)


def orbit_trajectory(spec: SceneSpec, frames: int = 24, height: float = 1.8, radius: float | None = None) -> list[Pose]:
    wx, wy, _ = spec.room_extent
    cx, cy = wx / 2, wy / 2
    r = radius if radius is not None else 0.5 * max(wx, wy) + 1.2
    out = []
    for i in range(frames):
        a = 2 * math.pi * i / frames
        eye = (cx + r * math.cos(a), cy + r * math.sin(a), height)
        out.append(look_at(eye, (cx, cy, 0.2)))
    return out


def pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    """Camera-frame ray directions with unit z, one per pixel, row-major (H*W, 3)."""
    u, v = np.meshgrid(np.arange(intr.width, dtype=np.float64), np.arange(intr.height, dtype=np.float64))
    return np.stack(
        [((u - intr.cx) / intr.fx).ravel(), ((v - intr.cy) / intr.fy).ravel(), np.ones(u.size)], axis=1
    )


def ray_box_depth(origin: np.ndarray, dirs: np.ndarray, box: Obb) -> np.ndarray:
    """Slab test. Ray parameter of the entry point per direction, ``inf`` on a miss.

    With unit-z camera rays the parameter equals the camera-frame depth.
    """
    o = box.to_local(origin)
    d = dirs @ box.rotation
    h = box.extents / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-h - o) / d
        t2 = (h - o) / d
    lo = np.where(d == 0, np.where(np.abs(o) <= h, -np.inf, np.inf), np.minimum(t1, t2))
    hi = np.where(d == 0, np.where(np.abs(o) <= h, np.inf, -np.inf), np.maximum(t1, t2))
    t_near = lo.max(axis=1)
    t_far = hi.min(axis=1)
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf)


def _screen_window(box: Obb, pose: Pose, intr: CameraIntrinsics):
    """Flat pixel indices of the box's projected bounding rectangle (padded by one pixel),
    or None when a corner lies behind the camera and the whole image must be tested."""
    pc = pose.apply(box.corners())
    if np.any(pc[:, 2] <= 1e-6):
        return None
    u = intr.fx * pc[:, 0] / pc[:, 2] + intr.cx
    v = intr.fy * pc[:, 1] / pc[:, 2] + intr.cy
    u0, u1 = max(int(np.floor(u.min())) - 1, 0), min(int(np.ceil(u.max())) + 1, intr.width - 1)
    v0, v1 = max(int(np.floor(v.min())) - 1, 0), min(int(np.ceil(v.max())) + 1, intr.height - 1)
    if u0 > u1 or v0 > v1:
        return np.zeros(0, dtype=np.int64)
    uu, vv = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1))
    return (vv * intr.width + uu).ravel()


def render_frame(surfaces, pose: Pose, intr: CameraIntrinsics):
    """Depth (camera z, 0 where nothing is hit) and per-pixel surface index (-1 for none)."""
    rays_c = pixel_rays(intr)
    cam_to_world = invert_pose(pose)
    origin = cam_to_world.translation
    dirs_w = rays_c @ cam_to_world.rotation.T
    best = np.full(len(rays_c), np.inf)
    owner = np.full(len(rays_c), -1, dtype=np.int64)
    for k, s in enumerate(surfaces):
        idx = _screen_window(s.obb, pose, intr)
        if idx is not None and idx.size == 0:
            continue
        sel = slice(None) if idx is None else idx
        t = ray_box_depth(origin, dirs_w[sel], s.obb)
        cur = best[sel]
        closer = t < cur
        cur[closer] = t[closer]
        best[sel] = cur
        own = owner[sel]
        own[closer] = k
        owner[sel] = own
    depth = np.where(np.isfinite(best), best, 0.0).reshape(intr.height, intr.width)
    return depth, owner.reshape(intr.height, intr.width)


@dataclass(frozen=True)
class RenderConfig:
    min_mask_pixels: int = 20
    feature_noise: float = 0.0
    mu_range: tuple[float, float] = (0.6, 0.99)


def render_observations(
    scene: GroundTruthScene,
    trajectory,
    intr: CameraIntrinsics | None = None,
    cfg: RenderConfig = RenderConfig(),
):
    """Frames with exact masks; returns ``(observations, colour images)``."""
    intr = intr or default_intrinsics()
    rng = np.random.default_rng([scene.spec.seed, 1])
    dim = scene.spec.feature_dim
    observations, images = [], []
    palette = np.array([s.color for s in scene.surfaces] + [(0, 0, 0)], dtype=np.uint8)
    for fi, pose in enumerate(trajectory):
        depth, owner = render_frame(scene.surfaces, pose, intr)
        dets = []
        for k, s in enumerate(scene.surfaces):
            vs, us = np.nonzero(owner == k)
            if len(us) < cfg.min_mask_pixels:
                continue
            feat = np.array(_onehot(s.feature_index, dim))
            if cfg.feature_noise > 0:
                feat = feat + rng.normal(0.0, cfg.feature_noise, size=dim)
            mu = float(rng.uniform(*cfg.mu_range))
            dets.append(Detection2D(np.stack([us, vs], axis=1), mu, feat, s.label, s.description))
        observations.append(
            FrameObservation(fi, intr, pose, depth.astype(np.float32), tuple(dets), f"frame_{fi:06d}.color.png")
        )
        images.append(palette[owner])
    return observations, images


def write_scene(directory, scene: GroundTruthScene, observations, images, qa=(), plans=()) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for obs, img in zip(observations, images):
        write_frame(d, obs, img)
    doc = graph_to_dict(scene.graph)
    doc["qa"] = [dict(x) for x in qa]
    doc["plans"] = [dict(x) for x in plans]
    doc["surfaces"] = [
        {"label": s.label, "description": s.description, "node_id": s.node_id,
         "center": s.obb.center.tolist(), "extent": s.obb.extents.tolist(), "rotation": s.obb.rotation.tolist()}
        for s in scene.surfaces
    ]
    (d / "gt.json").write_bytes(canonical_json(doc))
    return d / "gt.json"


def read_gt_tasks(path) -> tuple[list[dict], list[dict]]:
    doc = json.loads(Path(path).read_text())
    return list(doc.get("qa", [])), list(doc.get("plans", []))


# -- generated tasks ------------------------------------------------------------------


def plural(label: str) -> str:
    if label.endswith(("x", "ch", "sh", "s")):
        return label + "es"
    if label.endswith("f"):
        return label[:-1] + "ves"
    return label + "s"


def relation_answers(graph: SceneGraph, label: str, pred: str) -> set[str]:
    """Labels y such that some ``label`` instance stands in ``pred`` to a y (rank-1 predicates, inverse included)."""
    from .predicates import INVERSE

    inv = INVERSE.get(pred, pred)
    out = set()
    for e in graph.edges:
        s, o = graph.nodes[e.subject_id], graph.nodes[e.object_id]
        if s.label == label and e.predicate == pred:
            out.add(o.label)
        if o.label == label and e.predicate == inv:
            out.add(s.label)
    return out


def generate_qa(graph: SceneGraph) -> list[dict]:
    """Count questions per label, then relation questions whose answer is a single label."""
    counts: dict[str, int] = {}
    for n in graph.nodes.values():
        counts[n.label] = counts.get(n.label, 0) + 1
    out = [
        {"question": f"How many {plural(lab)} are there in the room?", "answer": str(c)}
        for lab, c in sorted(counts.items())
    ]
    seen = set()
    for e in sorted(graph.edges, key=lambda e: (e.subject_id, e.object_id)):
        s = graph.nodes[e.subject_id]
        q = f"What is the {s.label} {e.predicate}?"
        if q in seen:
            continue
        seen.add(q)
        ans = relation_answers(graph, s.label, e.predicate)
        if len(ans) == 1 and s.label not in ans:
            out.append({"question": q, "answer": ans.pop()})
    return out


def generate_plans(graph: SceneGraph) -> list[dict]:
    """Pick-and-place instructions between labels that occur once in the scene."""
    counts: dict[str, int] = {}
    for n in graph.nodes.values():
        counts[n.label] = counts.get(n.label, 0) + 1
    unique = sorted(lab for lab, c in counts.items() if c == 1)
    out = []
    for a, b in zip(unique, unique[1:]):
        out.append(
            {
                "instruction": f"Put the {a} on the {b}",
                "reference_steps": [f"navigate({a})", f"grasp({a})", f"navigate({b})", f"place({a})"],
            }
        )
    return out


# -- oracles ------------------------------------------------------------------------


def oracle_iou(a: Obb, b: Obb, samples_per_axis: int = 64) -> float:
    """Grid-containment IoU over the union's bounding box; error O(1/samples_per_axis)."""
    if samples_per_axis < 64:
        raise ValueError("samples_per_axis must be >= 64")
    la, ha = a.aabb()
    lb, hb = b.aabb()
    lo, hi = np.minimum(la, lb), np.maximum(ha, hb)
    n = samples_per_axis
    axes = [lo[i] + (np.arange(n) + 0.5) * (hi[i] - lo[i]) / n for i in range(3)]
    inter = union = 0
    # slice along x to bound memory at large n
    gy, gz = np.meshgrid(axes[1], axes[2], indexing="ij")
    plane = np.stack([gy.ravel(), gz.ravel()], axis=1)
    for x in axes[0]:
        pts = np.column_stack([np.full(len(plane), x), plane])
        ia, ib = a.contains(pts), b.contains(pts)
        inter += int(np.count_nonzero(ia & ib))
        union += int(np.count_nonzero(ia | ib))
    return inter / union if union else 0.0


def monte_carlo_iou(a: Obb, b: Obb, samples: int = 1_000_000, seed: int = 0) -> float:
    """Uniform samples in the union's bounding box."""
    la, ha = a.aabb()
    lb, hb = b.aabb()
    lo, hi = np.minimum(la, lb), np.maximum(ha, hb)
    pts = np.random.default_rng(seed).uniform(lo, hi, size=(samples, 3))
    ia, ib = a.contains(pts), b.contains(pts)
    union = int(np.count_nonzero(ia | ib))
    return int(np.count_nonzero(ia & ib)) / union if union else 0.0


def exact_score(query, embedding) -> float:
    """Dot product of float32-rounded vectors in rational arithmetic, rounded once."""
    q = np.asarray(query, dtype=np.float64).astype(np.float32)
    e = np.asarray(embedding, dtype=np.float64).astype(np.float32)
    return float(sum((Fraction(float(x)) * Fraction(float(y)) for x, y in zip(q, e)), Fraction(0)))


def oracle_topk(records, query, k: int):
    """Full sort by score (descending), stable by record id."""
    qv = query.values if hasattr(query, "values") else query
    scored = [(exact_score(qv, r.embedding.values), r.record_id, r) for r in records]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [(r, s) for s, _, r in scored[:k]]


def _sat_overlap(a: Obb, b: Obb) -> bool:
    """Positive-volume overlap by projecting all corners on the 15 candidate axes (touching is not overlap)."""
    ca, cb = a.corners(), b.corners()
    axes = [a.rotation[:, i] for i in range(3)] + [b.rotation[:, i] for i in range(3)]
    axes += [np.cross(a.rotation[:, i], b.rotation[:, j]) for i in range(3) for j in range(3)]
    for ax in axes:
        n = float(np.linalg.norm(ax))
        if n < 1e-9:
            continue
        pa, pb = ca @ (ax / n), cb @ (ax / n)
        if pa.max() <= pb.min() or pb.max() <= pa.min():
            return False
    return True


def oracle_candidate_pairs(graph: SceneGraph, use_iou: bool, use_distance: bool, d_thresh: float) -> set:
    """Double loop over unordered pairs with the union rule; overlap by a corner-projection SAT."""
    out = set()
    ids = sorted(graph.nodes)
    for x in range(len(ids)):
        for y in range(x + 1, len(ids)):
            a, b = graph.nodes[ids[x]].obb, graph.nodes[ids[y]].obb
            keep = not (use_iou or use_distance)
            if use_iou and _sat_overlap(a, b):
                keep = True
            if use_distance and float(np.sqrt(np.sum((a.center - b.center) ** 2))) < d_thresh:
                keep = True
            if keep:
                out.add((ids[x], ids[y]))
    return out
