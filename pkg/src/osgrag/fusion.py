"""Multi-frame fusion of 2D detections into persistent 3D object tracks."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BothZeroVectors, EmptyAfterDepthFilter, TooFewPoints, TooFewSamples
from .geometry import CameraIntrinsics, Obb, Pose, back_project_many, fit_upright_obb, invert_pose

log = logging.getLogger(__name__)

WHITEN_EPS = 1e-6
VOXEL_SIZE = 0.01


@dataclass(frozen=True)
class FusionConfig:
    tau0: float = 8.0
    lambda_entropy: float = 2.0
    tau_min: float = 1.0
    tau_max: float = 50.0
    merge_period_L: int = 10
    tau_merge: float = 0.2
    s_merge: float = 0.8
    feature_dim: int = 32
    assoc_cos_min: float = 0.75
    epsilon_mu: float = 1e-3

    def __post_init__(self):
        if not 0 < self.tau_min <= self.tau_max:
            raise ValueError("need 0 < tau_min <= tau_max")
        if self.merge_period_L < 1:
            raise ValueError("merge_period_L must be >= 1")
        if not 0 < self.tau_merge < 1:
            raise ValueError("tau_merge must lie in (0, 1)")
        if not 0 < self.s_merge <= 1:
            raise ValueError("s_merge must lie in (0, 1]")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")


@dataclass(frozen=True, eq=False)
class Detection2D:
    """One instance mask. ``mask`` holds (u, v) pixel rows in row-major scan order."""

    mask: np.ndarray
    score_mu: float
    feature: np.ndarray
    proposed_label: str | None = None
    proposed_description: str | None = None

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=np.int64).reshape(-1, 2)
        if len(m) == 0:
            raise ValueError("detection mask is empty")
        if not 0.0 <= self.score_mu <= 1.0:
            raise ValueError("score_mu must lie in [0, 1]")
        order = np.lexsort((m[:, 0], m[:, 1]))
        m = m[order]
        f = np.asarray(self.feature, dtype=np.float64).ravel()
        m.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "feature", f)

    def bbox(self) -> tuple[int, int, int, int]:
        u0, v0 = self.mask.min(axis=0)
        u1, v1 = self.mask.max(axis=0)
        return int(u0), int(v0), int(u1), int(v1)


@dataclass(frozen=True, eq=False)
class FrameObservation:
    frame_index: int
    intrinsics: CameraIntrinsics
    pose_w_c: Pose
    depth: np.ndarray
    detections: tuple[Detection2D, ...] = ()
    color_ref: str = ""

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float32)
        if d.shape != (self.intrinsics.height, self.intrinsics.width):
            raise ValueError(
                f"depth shape {d.shape} does not match {self.intrinsics.height}x{self.intrinsics.width}"
            )
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "detections", tuple(self.detections))
        for det in self.detections:
            u, v = det.mask[:, 0], det.mask[:, 1]
            if u.min() < 0 or v.min() < 0 or u.max() >= self.intrinsics.width or v.max() >= self.intrinsics.height:
                raise ValueError("detection mask pixel out of bounds")


@dataclass(frozen=True)
class Observation:
    frame_index: int
    pixel_area: int
    bbox: tuple[int, int, int, int]
    color_ref: str = ""
    proposed_label: str | None = None
    score_mu: float = 0.0
    proposed_description: str | None = None

    @property
    def crop_ref(self) -> str:
        u0, v0, u1, v1 = self.bbox
        return f"{self.color_ref}#{u0},{v0},{u1},{v1}"


@dataclass(frozen=True, eq=False)
class ObjectTrack:
    id: int
    world_points: np.ndarray
    feature: np.ndarray
    confidence: tuple[float, float]
    observations: tuple[Observation, ...] = ()
    feature_count: int = 1
    max_mu: float = 0.0
    label: str | None = None
    description: str = ""

    @property
    def point_count(self) -> int:
        return len(self.world_points)

    @property
    def obb(self) -> Obb:
        cached = self.__dict__.get("_obb")
        if cached is None:
            cached = fit_track_obb(self.world_points)
            object.__setattr__(self, "_obb", cached)
        return cached

    def observed_frames(self) -> list[int]:
        return sorted({o.frame_index for o in self.observations})


def voxel_downsample(points: np.ndarray, voxel: float = VOXEL_SIZE) -> np.ndarray:
    keys = np.floor(points / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(first)]


def fit_track_obb(points: np.ndarray) -> Obb:
    """Upright box around a track's points.

    Scans only ever see the visible faces, unevenly, which tilts PCA axes;
    indoor objects stand on the floor, so the vertical is fixed instead.
    """
    return fit_upright_obb(points)


def binary_entropy(mu: float) -> float:
    """Entropy in nats."""
    if mu <= 0.0 or mu >= 1.0:
        return 0.0
    return -(mu * math.log(mu) + (1.0 - mu) * math.log(1.0 - mu))


def confidence_params(mu: float, cfg: FusionConfig = FusionConfig()) -> tuple[float, float]:
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    mu = min(max(mu, cfg.epsilon_mu), 1.0 - cfg.epsilon_mu)
    tau = max(cfg.tau_min, min(cfg.tau_max, cfg.tau0 + cfg.lambda_entropy * binary_entropy(mu)))
    return mu * tau, (1.0 - mu) * tau


def lift_detection(obs: FrameObservation, det: Detection2D) -> np.ndarray:
    """World points for every mask pixel with valid depth, in row-major order."""
    u, v = det.mask[:, 0], det.mask[:, 1]
    d = obs.depth[v, u].astype(np.float64)
    valid = np.isfinite(d) & (d > 0)
    if not np.any(valid):
        raise EmptyAfterDepthFilter(f"frame {obs.frame_index}: every mask pixel has invalid depth")
    pc = back_project_many(det.mask[valid], d[valid], obs.intrinsics)
    return invert_pose(obs.pose_w_c).apply(pc)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


def ingest_frame(tracks, obs: FrameObservation, cfg: FusionConfig = FusionConfig()):
    """Associate each detection with a track or open a new one.

    Returns ``(tracks, log)`` where ``tracks`` is a new list sorted by id.
    """
    current = {t.id: t for t in tracks}
    next_id = max(current, default=-1) + 1
    events = []
    for k, det in enumerate(obs.detections):
        if len(det.feature) != cfg.feature_dim:
            raise ValueError(f"detection feature has length {len(det.feature)}, expected {cfg.feature_dim}")
        try:
            pts = lift_detection(obs, det)
        except EmptyAfterDepthFilter as exc:
            log.info("skipping detection %d: %s", k, exc)
            events.append({"frame": obs.frame_index, "detection": k, "action": "skipped", "reason": str(exc)})
            continue
        observation = Observation(
            obs.frame_index, len(det.mask), det.bbox(), obs.color_ref, det.proposed_label, float(det.score_mu),
            det.proposed_description,
        )
        best_id, best_cos = None, -math.inf
        for tid in sorted(current):
            c = cosine(current[tid].feature, det.feature)
            if c > best_cos:
                best_id, best_cos = tid, c
        if best_id is not None and best_cos >= cfg.assoc_cos_min:
            t = current[best_id]
            n = t.feature_count
            mu = max(t.max_mu, float(det.score_mu))
            current[best_id] = replace(
                t,
                world_points=np.concatenate([t.world_points, pts]),
                feature=(t.feature * n + det.feature) / (n + 1),
                feature_count=n + 1,
                max_mu=mu,
                confidence=confidence_params(mu, cfg),
                observations=t.observations + (observation,),
            )
            events.append({"frame": obs.frame_index, "detection": k, "action": "append", "track": best_id})
        else:
            current[next_id] = ObjectTrack(
                id=next_id,
                world_points=pts,
                feature=np.array(det.feature, dtype=np.float64),
                confidence=confidence_params(float(det.score_mu), cfg),
                observations=(observation,),
                max_mu=float(det.score_mu),
            )
            events.append({"frame": obs.frame_index, "detection": k, "action": "new", "track": next_id})
            next_id += 1
    return [current[i] for i in sorted(current)], events


def whiten_features(features):
    """Mahalanobis-whiten a set of feature vectors.

    Returns ``(whitened, mean, covariance)``; the covariance is the sample
    covariance (ddof=1) before the ``+eps I`` regularisation.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or len(f) < 2:
        raise TooFewSamples("whitening needs at least two feature vectors")
    mean = f.mean(axis=0)
    centered = f - mean
    cov = centered.T @ centered / (len(f) - 1)
    w, v = np.linalg.eigh(cov + WHITEN_EPS * np.eye(f.shape[1]))
    inv_sqrt = (v / np.sqrt(w)) @ v.T
    return centered @ inv_sqrt, mean, cov


def merge_similarity(fa, fb, cfg: FusionConfig = FusionConfig()) -> float:
    """Gated cosine: cosine if the normalised gap is below ``tau_merge``, else 0."""
    fa = np.asarray(fa, dtype=np.float64)
    fb = np.asarray(fb, dtype=np.float64)
    if fa.shape != fb.shape:
        raise ValueError("feature vectors differ in length")
    na, nb = float(np.linalg.norm(fa)), float(np.linalg.norm(fb))
    if na == 0.0 and nb == 0.0:
        raise BothZeroVectors("both feature vectors are zero")
    if float(np.linalg.norm(fa - fb)) / (na + nb) < cfg.tau_merge:
        return float(fa @ fb) / (na * nb)
    return 0.0


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def merge_groups(tracks, cfg: FusionConfig = FusionConfig()) -> list[list[int]]:
    """Index groups (into ``tracks``) that the merge rule joins transitively."""
    n = len(tracks)
    if n < 2:
        return [[i] for i in range(n)]
    white, _, _ = whiten_features([t.feature for t in tracks])
    uf = _UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            try:
                s = merge_similarity(white[i], white[j], cfg)
            except BothZeroVectors:
                # both coincide with the mean, so the raw features are equal
                s = 1.0
            if s >= cfg.s_merge:
                uf.union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    return sorted(groups.values())


def _merge_tracks(members) -> ObjectTrack:
    members = sorted(members, key=lambda t: t.id)
    if len(members) == 1:
        return members[0]
    counts = np.array([t.point_count for t in members], dtype=np.float64)
    feats = np.stack([t.feature for t in members])
    return ObjectTrack(
        id=members[0].id,
        world_points=np.concatenate([t.world_points for t in members]),
        feature=(counts @ feats) / counts.sum(),
        confidence=(sum(t.confidence[0] for t in members), sum(t.confidence[1] for t in members)),
        observations=tuple(sorted((o for t in members for o in t.observations), key=lambda o: o.frame_index)),
        feature_count=sum(t.feature_count for t in members),
        max_mu=max(t.max_mu for t in members),
        label=members[0].label,
        description=members[0].description,
    )


def merge_step(tracks, cfg: FusionConfig = FusionConfig()) -> list[ObjectTrack]:
    """Merge passes until none fires.

    Whitening statistics change once tracks merge, so a single pass can leave
    pairs that a second pass would join; iterating makes the step idempotent.
    """
    tracks = sorted(tracks, key=lambda t: t.id)
    while True:
        groups = merge_groups(tracks, cfg)
        if len(groups) == len(tracks):
            return tracks
        tracks = sorted((_merge_tracks([tracks[i] for i in g]) for g in groups), key=lambda t: t.id)


@dataclass
class FrameRecord:
    """What a fusion session keeps about a frame for best-view scoring."""

    frame_index: int
    pose_w_c: Pose
    intrinsics: CameraIntrinsics
    depth: np.ndarray
    color_ref: str = ""


@dataclass
class FusionSession:
    """Single-writer state machine: ingest frames in order, merge every L frames."""

    cfg: FusionConfig = field(default_factory=FusionConfig)
    tracks: list = field(default_factory=list)
    frames: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    frame_count: int = 0

    def ingest(self, obs: FrameObservation) -> None:
        self.tracks, ev = ingest_frame(self.tracks, obs, self.cfg)
        self.events.extend(ev)
        self.frames[obs.frame_index] = FrameRecord(
            obs.frame_index, obs.pose_w_c, obs.intrinsics, obs.depth, obs.color_ref
        )
        self.frame_count += 1
        if self.frame_count % self.cfg.merge_period_L == 0:
            self.tracks = merge_step(self.tracks, self.cfg)

    def finish(self) -> list[ObjectTrack]:
        """Final merge, then tracks that can carry a box (at least four points)."""
        self.tracks = merge_step(self.tracks, self.cfg)
        kept = []
        for t in self.tracks:
            try:
                t.obb
            except TooFewPoints:
                log.info("dropping track %d: only %d points", t.id, t.point_count)
                continue
            kept.append(t)
        return kept
