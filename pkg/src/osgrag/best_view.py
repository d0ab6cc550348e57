"""Best-view selection: maximise projected area x visibility**gamma - lambda x pose change."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import NoCandidates
from .geometry import CameraIntrinsics, Pose, project_points

log = logging.getLogger(__name__)

OCCLUSION_TOL = 0.02


@dataclass(frozen=True)
class ViewScoreConfig:
    gamma: float = 0.5
    lambda_pose: float = 100.0
    reference_pose_source: str = "previous_best"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.lambda_pose >= 0:
            raise ValueError("lambda_pose must be non-negative")
        if self.reference_pose_source not in ("previous_best", "first_observation"):
            raise ValueError("reference_pose_source must be previous_best or first_observation")


@dataclass(frozen=True, eq=False)
class ViewCandidate:
    frame_index: int
    pose: Pose
    intrinsics: CameraIntrinsics
    depth: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class BestViewChoice:
    frame_index: int
    pose: Pose
    score: float


def projected_area(points_w, pose: Pose, intr: CameraIntrinsics) -> float:
    """Pixel area of the convex hull of the in-image projections."""
    uv, _, ok = project_points(points_w, pose, intr)
    uv = uv[ok]
    if len(uv) < 3:
        return 0.0
    try:
        return float(ConvexHull(uv).volume)
    except (QhullError, ValueError):
        return 0.0  # collinear


def visibility(points_w, pose: Pose, intr: CameraIntrinsics, depth: np.ndarray | None = None) -> float:
    """Fraction of points that land in the image in front of the camera and are not occluded.

    With a depth map, a point is occluded when its depth exceeds the map by
    more than 2 cm; pixels without a depth reading never occlude.
    """
    pts = np.asarray(points_w, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return 0.0
    uv, z, ok = project_points(pts, pose, intr)
    if depth is not None and np.any(ok):
        iu = np.clip(np.rint(uv[ok, 0]).astype(np.int64), 0, intr.width - 1)
        iv = np.clip(np.rint(uv[ok, 1]).astype(np.int64), 0, intr.height - 1)
        d_map = np.asarray(depth, dtype=np.float64)[iv, iu]
        seen = (d_map <= 0) | ~np.isfinite(d_map) | (z[ok] <= d_map + OCCLUSION_TOL)
        ok = ok.copy()
        ok[np.flatnonzero(ok)] = seen
    return float(np.count_nonzero(ok)) / len(pts)


def pose_distance(a: Pose, b: Pose) -> float:
    return float(np.linalg.norm(a.rotation - b.rotation) + np.linalg.norm(a.translation - b.translation))


def view_score(points_w, cand: ViewCandidate, reference: Pose, cfg: ViewScoreConfig) -> float:
    area = projected_area(points_w, cand.pose, cand.intrinsics)
    vis = visibility(points_w, cand.pose, cand.intrinsics, cand.depth)
    return area * vis**cfg.gamma - cfg.lambda_pose * pose_distance(reference, cand.pose)


def reference_pose(candidates: Sequence[ViewCandidate], cfg: ViewScoreConfig, previous_best: Pose | None) -> Pose:
    if cfg.reference_pose_source == "previous_best" and previous_best is not None:
        return previous_best
    return min(candidates, key=lambda c: c.frame_index).pose


def select_best_view(
    points_w,
    candidates: Sequence[ViewCandidate],
    cfg: ViewScoreConfig = ViewScoreConfig(),
    previous_best: Pose | None = None,
) -> BestViewChoice:
    """Argmax of the view score over observed candidate poses; ties go to the lower frame index.

    ``points_w`` may be an ``ObjectTrack`` or an (N, 3) array.
    """
    if not candidates:
        raise NoCandidates("no candidate views")
    pts = getattr(points_w, "world_points", points_w)
    ref = reference_pose(candidates, cfg, previous_best)
    best = None
    for cand in sorted(candidates, key=lambda c: c.frame_index):
        s = view_score(pts, cand, ref, cfg)
        if best is None or s > best.score:
            best = BestViewChoice(cand.frame_index, cand.pose, s)
    return best


def label_best_view(track, choice: BestViewChoice, labeler):
    """Ask the labelling client about the best-view crop.

    Returns the track with label and description set.  Client errors
    propagate; the input track is never modified.
    """
    obs = next((o for o in track.observations if o.frame_index == choice.frame_index), None)
    crop_ref = obs.crop_ref if obs is not None else ""
    hint = obs.proposed_label if obs is not None else None
    detail = obs.proposed_description if obs is not None else None
    label, description = labeler.label(crop_ref, hint, detail)
    return replace(track, label=label, description=description)
