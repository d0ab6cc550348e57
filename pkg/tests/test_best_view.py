import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from osgrag.best_view import (
    ViewCandidate,
    ViewScoreConfig,
    label_best_view,
    pose_distance,
    projected_area,
    select_best_view,
    visibility,
)
from osgrag.errors import ClientUnavailable, NoCandidates
from osgrag.fusion import ObjectTrack, Observation
from osgrag.geometry import CameraIntrinsics, Pose, look_at, so3_exp
from osgrag.model_clients import MockBackend

INTR = CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)
SQUARE = np.array([[-0.5, -0.5, 2.0], [0.5, -0.5, 2.0], [0.5, 0.5, 2.0], [-0.5, 0.5, 2.0]])


class TestArea:
    def test_unit_square_at_depth_two(self):
        assert projected_area(SQUARE, Pose.identity(), INTR) == pytest.approx(62500.0, rel=1e-12)

    def test_duplicates_do_not_change_area(self):
        assert projected_area(np.vstack([SQUARE, SQUARE]), Pose.identity(), INTR) == pytest.approx(62500.0)

    def test_behind_camera(self):
        assert projected_area(SQUARE * [1, 1, -1], Pose.identity(), INTR) == 0.0


class TestVisibility:
    def test_all_visible(self):
        assert visibility(SQUARE, Pose.identity(), INTR) == 1.0

    def test_behind(self):
        assert visibility(SQUARE * [1, 1, -1], Pose.identity(), INTR) == 0.0

    def test_half_occluded(self):
        pts = np.array([[x, 0.0, 3.0] for x in np.linspace(-1, 1, 10)])
        depth = np.full((480, 640), 5.0)
        depth[:, :320] = 1.0  # occluder covering the left half of the image
        assert visibility(pts, Pose.identity(), INTR, depth) == 0.5


class TestPoseDistance:
    def test_zero(self):
        p = look_at((1, 2, 3), (0, 0, 0))
        assert pose_distance(p, p) == 0.0

    def test_half_turn(self):
        b = Pose(so3_exp((0, 0, math.pi)), np.zeros(3))
        assert abs(pose_distance(Pose.identity(), b) - 2 * math.sqrt(2)) < 1e-9

    def test_translation(self):
        assert pose_distance(Pose.identity(), Pose(np.eye(3), (3, 4, 0))) == 5.0


# -- exhaustive oracle ------------------------------------------------------------


def _hull_area(pts):
    """Monotone chain hull + shoelace."""
    pts = sorted(set(map(tuple, pts)))
    if len(pts) < 3:
        return 0.0

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return abs(sum(hull[i][0] * hull[i - 1][1] - hull[i - 1][0] * hull[i][1] for i in range(len(hull)))) / 2


def _oracle_score(points, pose, intr, depth, ref, gamma, lam):
    inside, seen = [], 0
    for p in points:
        c = pose.rotation @ p + pose.translation
        if c[2] <= 0:
            continue
        u = intr.fx * c[0] / c[2] + intr.cx
        v = intr.fy * c[1] / c[2] + intr.cy
        if not (0 <= u < intr.width and 0 <= v < intr.height):
            continue
        inside.append((u, v))
        if depth is not None:
            d = depth[min(int(round(v)), intr.height - 1), min(int(round(u)), intr.width - 1)]
            if d > 0 and c[2] > d + 0.02:
                continue
        seen += 1
    area = _hull_area(inside)
    dist = math.sqrt(((pose.rotation - ref.rotation) ** 2).sum()) + math.sqrt(((pose.translation - ref.translation) ** 2).sum())
    return area * (seen / len(points)) ** gamma - lam * dist


def _battery_case(seed):
    rng = np.random.default_rng(seed)
    intr = CameraIntrinsics(200.0, 200.0, 79.5, 59.5, 160, 120)
    center = rng.uniform(-1, 1, 3)
    pts = center + rng.uniform(-0.5, 0.5, (60, 3)) * rng.uniform(0.2, 1.0, 3)
    cands = []
    for f in range(8):
        eye = center + rng.normal(size=3) * rng.uniform(1.0, 4.0)
        target = center + rng.normal(scale=0.4, size=3)
        depth = None
        if rng.random() < 0.5:
            depth = rng.uniform(0.5, 6.0, (120, 160))
        cands.append(ViewCandidate(int(rng.permutation(100)[f]), look_at(eye, target), intr, depth))
    cfg = ViewScoreConfig(gamma=float(rng.uniform(0.2, 2.0)), lambda_pose=float(rng.choice([0.0, 10.0, 100.0])))
    return pts, cands, cfg


@pytest.mark.parametrize("seed", range(100))
def test_select_matches_exhaustive_oracle(seed):
    pts, cands, cfg = _battery_case(seed)
    ref = min(cands, key=lambda c: c.frame_index).pose
    scores = [(_oracle_score(pts, c.pose, c.intrinsics, c.depth, ref, cfg.gamma, cfg.lambda_pose), -c.frame_index) for c in cands]
    best = max(range(len(cands)), key=lambda i: scores[i])
    choice = select_best_view(pts, cands, cfg)
    assert choice.frame_index == cands[best].frame_index
    assert choice.score == pytest.approx(scores[best][0], rel=1e-9, abs=1e-6)


def test_single_candidate():
    c = ViewCandidate(4, Pose.identity(), INTR)
    assert select_best_view(SQUARE, [c]).frame_index == 4


def test_closer_view_wins_without_pose_term():
    far = ViewCandidate(0, Pose(np.eye(3), (0, 0, 2.0)), INTR)
    near = ViewCandidate(1, Pose.identity(), INTR)
    choice = select_best_view(SQUARE, [far, near], ViewScoreConfig(lambda_pose=0.0))
    assert choice.frame_index == 1


def test_previous_best_reference():
    a = ViewCandidate(0, Pose.identity(), INTR)
    b = ViewCandidate(1, Pose(np.eye(3), (0.05, 0, 0)), INTR)
    cfg = ViewScoreConfig(lambda_pose=1e6)
    assert select_best_view(SQUARE, [a, b], cfg, previous_best=b.pose).frame_index == 1
    assert select_best_view(SQUARE, [a, b], cfg).frame_index == 0


def test_no_candidates():
    with pytest.raises(NoCandidates):
        select_best_view(SQUARE, [])


@given(st.floats(0.01, 5.0), st.floats(0, 1e3))
def test_config_accepts_valid(gamma, lam):
    assert ViewScoreConfig(gamma, lam).gamma == gamma


def _track(crop_stem):
    obs = Observation(3, 10, (0, 0, 4, 4), crop_stem)
    return ObjectTrack(0, np.zeros((4, 3)), np.zeros(4), (1.0, 1.0), (obs,))


def test_label_from_fixture():
    from osgrag.best_view import BestViewChoice

    out = label_best_view(_track("box_red_0"), BestViewChoice(3, Pose.identity(), 1.0), MockBackend())
    assert (out.label, out.description) == ("box", "a red box")


def test_label_client_failure_leaves_track_unlabelled():
    from osgrag.best_view import BestViewChoice

    class Down:
        def label(self, *a, **k):
            raise ClientUnavailable("timeout")

    t = _track("x")
    with pytest.raises(ClientUnavailable):
        label_best_view(t, BestViewChoice(3, Pose.identity(), 1.0), Down())
    assert t.label is None
