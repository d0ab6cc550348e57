"""Frames in, scene graph out: fusion, best view and labeling, background filter, relations."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .best_view import ViewCandidate, ViewScoreConfig, label_best_view, select_best_view
from .fusion import FusionConfig, FusionSession, voxel_downsample
from .geometry import PoseNoiseModel, perturb_pose
from .relations import PairFilterConfig, candidate_pairs, extract_relations
from .scene_model import DEFAULT_BACKGROUND, BestView, ObjectNode, SceneGraph, filter_background

log = logging.getLogger(__name__)

VIEW_VOXEL = 0.02
VIEW_MAX_POINTS = 4096


@dataclass(frozen=True)
class PipelineConfig:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    view: ViewScoreConfig = field(default_factory=ViewScoreConfig)
    pairs: PairFilterConfig = field(default_factory=PairFilterConfig)
    background_labels: tuple[str, ...] = tuple(sorted(DEFAULT_BACKGROUND))
    max_parallel: int = 1
    pose_noise: PoseNoiseModel | None = None
    seed: int = 0


def view_points(points: np.ndarray) -> np.ndarray:
    """Thinned copy of a track's points for view scoring: 2 cm voxels, then an even stride."""
    pts = voxel_downsample(points, VIEW_VOXEL)
    if len(pts) > VIEW_MAX_POINTS:
        pts = pts[:: -(-len(pts) // VIEW_MAX_POINTS)]
    return pts


def fuse(frames, cfg: PipelineConfig) -> FusionSession:
    session = FusionSession(cfg.fusion)
    for obs in frames:
        if cfg.pose_noise is not None:
            obs = replace(obs, pose_w_c=perturb_pose(obs.pose_w_c, cfg.pose_noise, cfg.seed * 1_000_003 + obs.frame_index))
        session.ingest(obs)
    return session


def label_tracks(session: FusionSession, tracks, labeler, cfg: PipelineConfig) -> list[ObjectNode]:
    nodes = []
    for t in tracks:
        cands = [
            ViewCandidate(f, session.frames[f].pose_w_c, session.frames[f].intrinsics, session.frames[f].depth)
            for f in t.observed_frames()
        ]
        choice = select_best_view(view_points(t.world_points), cands, cfg.view)
        labeled = label_best_view(t, choice, labeler)
        obs = next(o for o in t.observations if o.frame_index == choice.frame_index)
        nodes.append(
            ObjectNode(
                id=t.id,
                label=labeled.label,
                description=labeled.description,
                feature=tuple(t.feature),
                obb=t.obb,
                best_view=BestView(choice.frame_index, choice.pose, obs.crop_ref),
                confidence=t.confidence,
                point_count=t.point_count,
            )
        )
    return nodes


def footprint_bounds(nodes) -> tuple[float, float, float, float]:
    if not nodes:
        return (0.0, 0.0, 0.0, 0.0)
    corners = np.concatenate([n.obb.corners()[:, :2] for n in nodes])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def build_graph(frames, backend, cfg: PipelineConfig = PipelineConfig()) -> SceneGraph:
    """Run the whole construction pipeline with one backend acting as labeler and relator."""
    session = fuse(frames, cfg)
    tracks = session.finish()
    nodes = label_tracks(session, tracks, backend, cfg)
    full = SceneGraph(
        {n.id: n for n in nodes},
        (),
        cfg.fusion.feature_dim,
        session.frame_count,
        footprint_bounds(nodes),
    )
    fg = filter_background(full, cfg.background_labels)
    log.info("fusion kept %d tracks, %d after background filter", len(full.nodes), len(fg.nodes))
    pairs = candidate_pairs(fg, cfg.pairs)
    edges = extract_relations(pairs, fg, backend, cfg.max_parallel)
    return SceneGraph(fg.nodes, tuple(edges), fg.feature_dim, fg.frame_count, fg.floor_bounds)
