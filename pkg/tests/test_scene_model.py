import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from osgrag import SCHEMA_VERSION
from osgrag.errors import InvariantViolation, MalformedDocument
from osgrag.scene_model import (
    SceneGraph,
    canonicalize,
    deserialize_graph,
    distance_level,
    filter_background,
    round_sig,
    serialize_graph,
)

from conftest import edge, make_graph, make_node

LABELS = ["chair", "table", "floor", "wall", "mug", "book"]


@st.composite
def graphs(draw):
    n = draw(st.integers(0, 8))
    coords = st.floats(-3, 3, allow_nan=False)
    nodes = [
        make_node(
            i,
            draw(st.sampled_from(LABELS)),
            (draw(coords), draw(coords), draw(st.floats(0, 2))),
            extents=(draw(st.floats(0.05, 1)), draw(st.floats(0.05, 1)), draw(st.floats(0.05, 1))),
            yaw=draw(st.floats(-3, 3)),
            description=draw(st.text(max_size=20)),
        )
        for i in range(n)
    ]
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=10)) if pairs else []
    preds = st.lists(st.sampled_from(["on", "under", "near", "left of", "above"]), min_size=1, max_size=5, unique=True)
    edges = [edge(s, o, draw(preds), draw(st.floats(0, 5))) for s, o in chosen]
    return make_graph(nodes, edges)


def test_empty_graph_document():
    doc = json.loads(serialize_graph(SceneGraph({})))
    assert doc["nodes"] == [] and doc["edges"] == []
    assert doc["schema"] == SCHEMA_VERSION


@given(graphs())
def test_round_trip_is_identity_after_canonicalization(g):
    c = canonicalize(g)
    assert deserialize_graph(serialize_graph(c)) == c
    assert serialize_graph(c) == serialize_graph(g)


@given(graphs())
def test_equal_graphs_equal_bytes(g):
    again = SceneGraph(dict(reversed(list(g.nodes.items()))), tuple(reversed(g.edges)), g.feature_dim, g.frame_count, g.floor_bounds)
    assert serialize_graph(again) == serialize_graph(g)


def test_missing_edge_endpoint():
    g = make_graph([make_node(0, "chair", (0, 0, 0)), make_node(1, "table", (1, 0, 0))], [edge(0, 1, ["near"])])
    doc = json.loads(serialize_graph(g))
    doc["edges"][0]["object"] = 9
    with pytest.raises(InvariantViolation):
        deserialize_graph(json.dumps(doc).encode())


def test_truncated_document():
    data = serialize_graph(make_graph([make_node(0, "chair", (0, 0, 0))]))
    with pytest.raises(MalformedDocument):
        deserialize_graph(data[: len(data) // 2])


def test_wrong_schema_rejected():
    doc = json.loads(serialize_graph(SceneGraph({})))
    doc["schema"] = "other/9"
    with pytest.raises(MalformedDocument):
        deserialize_graph(json.dumps(doc).encode())


def test_node_invariants():
    with pytest.raises(InvariantViolation):
        make_node(0, "", (0, 0, 0))
    with pytest.raises(InvariantViolation):
        edge(1, 1, ["on"])
    with pytest.raises(InvariantViolation):
        edge(0, 1, ["on", "on"])
    with pytest.raises(InvariantViolation):
        edge(0, 1, ["a", "b", "c", "d", "e", "f"])
    with pytest.raises(InvariantViolation):
        make_graph([make_node(0, "chair", (0, 0, 0))], feature_dim=8)


def test_filter_background_removes_floor_and_its_edges():
    g = make_graph(
        [make_node(0, "floor", (0, 0, -0.05)), make_node(1, "table", (0, 0, 0.4)), make_node(2, "mug", (0, 0, 0.9))],
        [edge(1, 0, ["on"]), edge(2, 1, ["on"])],
    )
    out = filter_background(g, {"floor", "ceiling", "wall"})
    assert sorted(out.nodes) == [1, 2]
    assert [(e.subject_id, e.object_id) for e in out.edges] == [(2, 1)]
    assert filter_background(g, set()) == g
    everything = filter_background(g, {"floor", "table", "mug"})
    assert not everything.nodes and not everything.edges


@given(graphs(), st.sets(st.sampled_from(LABELS)))
def test_filter_background_is_a_subgraph(g, bg):
    out = filter_background(g, bg)
    assert all(n.label not in bg for n in out.nodes.values())
    assert set(out.nodes) <= set(g.nodes)
    assert all(e in g.edges for e in out.edges)


def test_levels_and_rounding():
    assert distance_level(0.35) == "close"
    assert distance_level(0.5) == "medium"
    assert distance_level(2.0) == "far"
    assert round_sig(1.23456789) == 1.23457
    with pytest.raises(ValueError):
        round_sig(float("nan"))


def test_rotation_survives_round_trip_orthonormal(rng):
    g = make_graph([make_node(0, "chair", (0, 0, 0), yaw=0.123456789)])
    back = deserialize_graph(serialize_graph(g))
    r = back.nodes[0].obb.rotation
    assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)
