from collections import Counter
from xml.etree import ElementTree

import pytest
from hypothesis import given
from hypothesis import strategies as st

from osgrag.errors import (
    EmptyInput,
    NoMatchingInstance,
    NoMentionedObjects,
    PlanParseFailure,
    UnboundTarget,
    UnresolvableReference,
)
from osgrag.mock_reasoner import NOT_FOUND
from osgrag.model_clients import MockBackend
from osgrag.rag_tasks import (
    Action,
    MapLocation,
    Plan,
    answer_question,
    envelope,
    extract_task_subgraph,
    ground_query,
    map_location,
    parse_plan,
    plan_from_text,
    plan_task,
    render_map_svg,
    render_prompt,
    retrieve_instance,
    validate_plan,
)
from osgrag.vector_store import build_chunks, index_chunks

from conftest import edge, make_graph, make_node


def office():
    nodes = [
        make_node(0, "chair", (1.0, 1.0, 0.4), description="a dark-colored chair with a curved back"),
        make_node(1, "chair", (2.0, 1.0, 0.4), description="a white plastic chair"),
        make_node(2, "table", (1.5, 1.2, 0.4), (1.2, 0.7, 0.8), description="a wooden table"),
        make_node(3, "book", (1.4, 1.2, 0.82), (0.2, 0.15, 0.04), description="a red book with a blue cover"),
        make_node(4, "shelf", (3.0, 2.5, 0.9), (0.8, 0.3, 1.8), description="a tall shelf"),
        make_node(5, "mug", (1.7, 1.1, 0.85), (0.08, 0.08, 0.1), description="a green mug"),
        make_node(6, "screen", (1.5, 2.9, 1.2), (1.0, 0.05, 0.6), description="a wall-mounted screen"),
        make_node(7, "trash bin", (0.3, 2.5, 0.2), (0.3, 0.3, 0.4), description="a gray trash bin"),
    ]
    edges = [
        edge(3, 2, ["on", "above", "near"], 0.42),
        edge(5, 2, ["on", "above"], 0.46),
        edge(0, 2, ["near"], 0.55),
        edge(1, 2, ["near"], 0.55),
    ]
    return make_graph(nodes, edges, bounds=(0, 0, 4, 3))


@pytest.fixture
def scene(mock):
    g = office()
    return g, index_chunks(build_chunks(g), mock)


class TestQa:
    def test_count_chairs(self, scene, mock):
        g, db = scene
        r = answer_question("How many chairs are there in the room?", db, mock, mock)
        assert r.answer == "2"
        assert r.context.entries[0].label == "chair"
        assert all(f in r.prompt.rendered for f in r.prompt.context_facts)
        assert "How many chairs are there in the room?" in r.prompt.rendered

    def test_left_of_with_position_fact(self, mock):
        p = render_prompt(["chair at center", "table on left"], "What is to the left of the chair?")
        assert "table" in mock.complete(p)

    def test_relation_question(self, scene, mock):
        g, db = scene
        assert answer_question("What is the book on?", db, mock, mock).answer == "table"

    def test_absent_label(self, scene, mock):
        g, db = scene
        assert answer_question("How many pianos are there in the room?", db, mock, mock).answer == NOT_FOUND

    def test_k_limits_context(self, scene, mock):
        g, db = scene
        r = answer_question("Where is the mug?", db, mock, mock, k=1)
        assert len(r.context.entries) == 1


class TestGround:
    def test_red_book(self, scene, mock):
        g, db = scene
        r = ground_query("Where is the red book?", db, mock, mock, g)
        assert r.node_id == 3
        assert r.crop_ref == g.nodes[3].best_view.crop_ref
        assert r.map == map_location(g.nodes[3])
        x0, y0, x1, y1 = g.floor_bounds
        assert x0 <= r.map.xy[0] <= x1 and y0 <= r.map.xy[1] <= y1

    def test_which_chair(self, scene, mock):
        g, db = scene
        assert ground_query("Where is the white plastic chair?", db, mock, mock, g).node_id == 1
        assert ground_query("Where is the dark chair?", db, mock, mock, g).node_id == 0

    def test_floor_projection(self):
        n = make_node(0, "box", (1, 2, 0.4), (0.4, 0.2, 0.8), yaw=0.5)
        loc = map_location(n)
        assert loc.xy == (1.0, 2.0)
        x0, y0, x1, y1 = loc.footprint
        assert x0 < 1 < x1 and y0 < 2 < y1

    def test_footprint_must_contain_xy(self):
        with pytest.raises(ValueError):
            MapLocation((5.0, 5.0), (0, 0, 1, 1))

    def test_empty_graph(self, scene, mock):
        _, db = scene
        with pytest.raises(NoMatchingInstance):
            ground_query("Where is the book?", db, mock, mock, make_graph([]))


class TestRetrieve:
    def test_image_fixture_finds_chair(self, scene, mock):
        g, db = scene
        r = retrieve_instance(db, mock, g, image_ref="chair_dark_0")
        assert g.nodes[r.node_id].label == "chair"
        # the chair sits in front of the screen, away from the trash bin side
        assert r.map.xy[1] < g.nodes[6].obb.center[1]

    def test_text_equal_to_instance_rendering(self, scene, mock):
        g, db = scene
        for nid, n in g.nodes.items():
            r = retrieve_instance(db, mock, g, text=f"{n.label}: {n.description}")
            assert r.node_id == nid

    def test_mixed_query_agrees(self, scene, mock):
        g, db = scene
        by_text = retrieve_instance(db, mock, g, text="dark chair")
        by_image = retrieve_instance(db, mock, g, image_ref="chair_dark_0")
        both = retrieve_instance(db, mock, g, text="dark chair", image_ref="chair_dark_0")
        assert by_text.node_id == by_image.node_id == both.node_id == 0

    def test_needs_a_modality(self, scene, mock):
        g, db = scene
        with pytest.raises(EmptyInput):
            retrieve_instance(db, mock, g)
        with pytest.raises(UnresolvableReference):
            retrieve_instance(db, mock, g, image_ref="nowhere.png#0,0,1,1")


class TestSubgraph:
    def test_book_and_shelf(self, mock):
        g = office()
        sub = extract_task_subgraph("Move the blue cover book to the shelf", g, mock)
        assert {3, 4} <= set(sub.nodes)
        assert 2 in sub.nodes  # the book's table comes along as context

    def test_nothing_mentioned(self, mock):
        with pytest.raises(NoMentionedObjects):
            extract_task_subgraph("Open the window", office(), mock)

    def test_synonym_mention(self, mock):
        sub = extract_task_subgraph("Bring me a cup", office(), mock)
        assert 5 in sub.nodes

    @given(st.data())
    def test_one_hop_closure(self, data):
        labels = ["chair", "table", "mug", "lamp", "box"]
        n = data.draw(st.integers(1, 8))
        nodes = [make_node(i, data.draw(st.sampled_from(labels)), (i, 0, 0)) for i in range(n)]
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
        chosen = data.draw(st.lists(st.sampled_from(pairs), unique=True, max_size=10)) if pairs else []
        g = make_graph(nodes, [edge(s, o, ["near"]) for s, o in chosen])
        target = data.draw(st.sampled_from(sorted(g.labels())))
        sub = extract_task_subgraph(f"pick up the {target}", g, MockBackend())
        seeds = {i for i, nd in g.nodes.items() if nd.label == target}
        expect = set(seeds)
        for s, o in chosen:
            if s in seeds:
                expect.add(o)
            if o in seeds:
                expect.add(s)
        assert set(sub.nodes) == expect
        assert set(sub.edges) <= set(g.edges)


class TestPlan:
    def test_mug_on_shelf(self, mock):
        r = plan_task("Put the mug on the shelf", office(), mock, mock)
        assert str(r.plan) == "navigate(mug), grasp(mug), navigate(shelf), place(mug)"
        assert r.plan.target_bindings == {"mug": 5, "shelf": 4}

    def test_blue_cover_book(self, mock):
        r = plan_task("Move the blue cover book to the shelf", office(), mock, mock)
        assert str(r.plan) == "find(book), navigate(book), grasp(book), navigate(shelf), place(book)"

    def test_grammar_rejection(self):
        m = MockBackend(replies={"Put the mug on the shelf": "jump(mug)"})
        with pytest.raises(PlanParseFailure):
            plan_task("Put the mug on the shelf", office(), m, m)

    def test_unbound_target(self):
        m = MockBackend(replies={"Put the mug on the shelf": "navigate(piano)"})
        with pytest.raises(UnboundTarget):
            plan_task("Put the mug on the shelf", office(), m, m)

    def test_parse_forms(self):
        want = ("navigate", "mug"), ("grasp", "mug")
        for text in ("navigate(mug), grasp(mug)", "navigate(mug) -> grasp(mug)", "1. navigate(mug)\n2. grasp(mug)",
                     "navigate(mug) → grasp(mug)."):
            assert tuple((a.verb, a.arg) for a in parse_plan(text)) == want
        for bad in ("", "walk(mug)", "navigate mug", "navigate(mug(x))"):
            with pytest.raises(PlanParseFailure):
                parse_plan(bad)


REF = plan_from_text("navigate(mug), grasp(mug), navigate(shelf), place(mug)")


class TestValidate:
    def test_equal(self):
        rep = validate_plan(REF, office(), REF)
        assert rep.correct and rep.executable and rep.wrong_actions == () and rep.missing_actions == ()

    def test_missing_grasp(self):
        plan = plan_from_text("navigate(mug), navigate(shelf), place(mug)")
        rep = validate_plan(plan, office(), REF)
        assert not rep.executable and not rep.correct
        assert rep.missing_actions == ("grasp(mug)",)

    def test_unknown_object_not_executable(self):
        assert not validate_plan(plan_from_text("navigate(piano)"), office()).executable

    def test_normalization(self):
        plan = plan_from_text("navigate(The Mugs), grasp(mug), navigate(shelf), place(mug)")
        assert validate_plan(plan, None, REF).correct

    @given(st.lists(st.tuples(st.sampled_from(["ins", "del"]), st.integers(0, 20), st.sampled_from(
        ["find(mug)", "navigate(table)", "grasp(book)", "place(mug)", "navigate(mug)"])), max_size=6))
    def test_mutations_match_multiset_oracle(self, edits):
        steps = [str(a) for a in REF.steps]
        for kind, pos, step in edits:
            if kind == "ins":
                steps.insert(pos % (len(steps) + 1), step)
            elif steps:
                del steps[pos % len(steps)]
        plan = plan_from_text(", ".join(steps)) if steps else Plan(())
        rep = validate_plan(plan, None, REF)
        mine, ref = Counter(steps), Counter(str(a) for a in REF.steps)
        assert len(rep.wrong_actions) == sum(max(0, mine[s] - ref[s]) for s in mine)
        assert len(rep.missing_actions) == sum(max(0, ref[s] - mine[s]) for s in ref)
        assert rep.correct == (steps == [str(a) for a in REF.steps])


def test_envelope_and_svg():
    env = envelope("qa", "q", answer="2")
    assert set(env) >= {"task", "query", "answer", "plan", "context_facts", "node_ids", "map", "crop_refs", "scores"}
    g = office()
    g.nodes[7].__dict__  # labels with markup still render valid XML
    svg = render_map_svg(make_graph([make_node(0, "r&d <box>", (1, 1, 0.2))], bounds=(0, 0, 2, 2)), [0])
    root = ElementTree.fromstring(svg)
    assert root.tag.endswith("svg")
    assert "#d62728" in svg
