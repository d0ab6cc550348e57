import numpy as np
import pytest
from hypothesis import settings

from osgrag.geometry import Obb, so3_exp
from osgrag.model_clients import MockBackend
from osgrag.scene_model import BestView, ObjectNode, RelationEdge, SceneGraph
from osgrag.geometry import Pose

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_rotation(rng) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_box(rng, spread=1.0, size=(0.2, 1.0), rotated=True) -> Obb:
    rot = random_rotation(rng) if rotated else np.eye(3)
    return Obb(rng.uniform(-spread, spread, 3), rng.uniform(*size, 3), rot)


def make_node(i, label, center, extents=(0.4, 0.4, 0.4), description=None, yaw=0.0, feature_dim=4) -> ObjectNode:
    rot = so3_exp((0.0, 0.0, yaw))
    feat = tuple(1.0 if k == i % feature_dim else 0.0 for k in range(feature_dim))
    return ObjectNode(
        id=i,
        label=label,
        description=description if description is not None else f"a {label}",
        feature=feat,
        obb=Obb(center, extents, rot),
        best_view=BestView(0, Pose.identity(), f"frame_000000.color.png#0,0,{10 + i},{10 + i}"),
        confidence=(2.0, 2.0),
    )


def make_graph(nodes, edges=(), feature_dim=4, bounds=(-5.0, -5.0, 5.0, 5.0)) -> SceneGraph:
    return SceneGraph({n.id: n for n in nodes}, tuple(edges), feature_dim, 1, bounds)


def edge(s, o, preds, distance=0.3) -> RelationEdge:
    return RelationEdge(s, o, tuple(preds), distance, "close" if distance < 0.5 else "medium")


@pytest.fixture
def mock():
    return MockBackend(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
