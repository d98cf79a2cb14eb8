import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgagent.errors import TemplateError
from kgagent.kg import KnowledgeGraph
from kgagent.questions import Question
from kgagent.rules import (
    NO_DEMOS_MARKER,
    RuleBody,
    RulePlanner,
    assemble_planner_prompt,
    build_demonstrations,
    generalize,
    mine_rule_bodies,
    parse_rule_bodies,
    parse_rule_line,
)

from helpers import chain_question_kg, graph_from_triples, random_graph_triples

PLANNER_TEMPLATE = "Examples:\n{{demonstrations}}\n\nQuestion: {{question}}\nRules:\n"


# ----------------------------------------------------------------------
# generalization
# ----------------------------------------------------------------------


def test_generalize_two_hop_path(sam_graph):
    path = sam_graph.bfs_shortest_paths("Sam", "SF", max_len=4)
    by_len = {len(p): p for p in path}
    two_hop = sam_graph.enumerate_closed_paths("Sam", "SF", max_len=2, cap=10)
    rule_strings = {generalize(sam_graph, p).serialize() for p in two_hop}
    assert "workFor(x, z1) AND locatedIn(z1, y)" in rule_strings
    assert by_len  # the direct liveIn edge is the shortest path
    assert generalize(sam_graph, by_len[1]).serialize() == "liveIn(x, y)"


def test_generalize_single_hop(chain_graph):
    (path,) = chain_graph.bfs_shortest_paths("A", "B", max_len=1)
    assert generalize(chain_graph, path).serialize() == "r(x, y)"


def test_generalize_preserves_length_and_direction():
    g = KnowledgeGraph()
    g.add("B", "owns", "A")
    g.add("B", "sells", "C")
    (path,) = g.bfs_shortest_paths("A", "C", max_len=2)
    rule = generalize(g, path)
    assert rule.relations == ("owns^-1", "sells")
    assert len(rule) == len(path)


def test_generalized_rule_regrounds_to_path_end():
    rng = random.Random(21)
    triples = random_graph_triples(rng, n_nodes=25, n_triples=70, n_rels=4)
    g = graph_from_triples(triples)
    checked = 0
    for end in ("E1", "E2", "E3"):
        for path in g.enumerate_closed_paths("E0", end, max_len=3, cap=50):
            rule = generalize(g, path)
            assert g.entity_label(path.end) in g.ground_rule(rule.relations, "E0")
            checked += 1
    assert checked > 10


# ----------------------------------------------------------------------
# grammar
# ----------------------------------------------------------------------


def test_parse_two_atom_rule():
    rules, skipped = parse_rule_bodies("r1(x, z1) AND r2(z1, y)")
    assert skipped == 0
    assert len(rules) == 1
    assert rules[0].relations == ("r1", "r2")


def test_parse_garbage_counts_skip():
    rules, skipped = parse_rule_bodies("garbage")
    assert rules == []
    assert skipped == 1


def test_parse_mixed_lines():
    text = "here are rules:\nworkFor(x, z1) AND locatedIn(z1, y)\nliveIn(x, y)\n"
    rules, skipped = parse_rule_bodies(text)
    assert [r.serialize() for r in rules] == [
        "workFor(x, z1) AND locatedIn(z1, y)",
        "liveIn(x, y)",
    ]
    assert skipped == 1


def test_parse_rejects_broken_chain():
    assert parse_rule_line("r1(x, z1) AND r2(z2, y)") is None
    assert parse_rule_line("r1(x, x)") is None


def test_parse_accepts_inverse_marker_and_dotted_relations():
    rule = parse_rule_line("music.artist.origin^-1(x, z1) AND people.person.nationality(z1, y)")
    assert rule is not None
    assert rule.relations == ("music.artist.origin^-1", "people.person.nationality")


@given(
    relations=st.lists(
        st.sampled_from(["workFor", "locatedIn^-1", "film.director", "r_2"]),
        min_size=1,
        max_size=4,
    )
)
@settings(max_examples=60, deadline=None)
def test_serialize_parse_round_trip(relations):
    rule = RuleBody(tuple(relations))
    parsed = parse_rule_line(rule.serialize())
    assert parsed == rule
    assert parsed.serialize() == rule.serialize()


# ----------------------------------------------------------------------
# demonstrations
# ----------------------------------------------------------------------


def _seed_graph_and_train():
    g = KnowledgeGraph()
    g.add("Sam", "workFor", "OpenAI")
    g.add("OpenAI", "locatedIn", "SF")
    g.add("Ada", "bornIn", "London")
    train = [
        Question("t0", "where does the employer of Sam sit?", ("Sam",), ("SF",)),
        Question("t1", "where was Ada born?", ("Ada",), ("London",)),
        Question("t2", "what is disconnected entirely?", ("Sam",), ("London",)),
    ]
    return g, train


def test_single_demonstration_with_unique_path():
    g, train = _seed_graph_and_train()
    demos = build_demonstrations("where does the employer of Kim sit?", train, g, k=1, m=5)
    assert len(demos) == 1
    assert demos[0].seed_question.id == "t0"
    assert [r.serialize() for r in demos[0].rule_bodies] == ["workFor(x, z1) AND locatedIn(z1, y)"]


def test_pathless_seed_is_skipped_and_backfilled():
    g, train = _seed_graph_and_train()
    demos = build_demonstrations("what disconnected thing about Sam and Ada?", train, g, k=3, m=5)
    assert len(demos) == 2
    assert {d.seed_question.id for d in demos} == {"t0", "t1"}


def test_every_demo_rule_grounds_to_a_gold_answer():
    rows, questions = chain_question_kg(50, hops=2)
    g = graph_from_triples(rows)
    demos = build_demonstrations(questions[0].question, questions, g, k=5, m=3)
    assert demos
    for demo in demos:
        gold = set(demo.seed_question.answer_entities)
        for rule in demo.rule_bodies:
            grounded = set()
            for q_ent in demo.seed_question.question_entities:
                grounded |= g.ground_rule(rule.relations, q_ent)
            assert grounded & gold


def test_mine_rule_bodies_caps_and_dedupes():
    rows, questions = chain_question_kg(3, hops=2)
    g = graph_from_triples(rows)
    rules = mine_rule_bodies(g, questions[0], m=5)
    assert [r.serialize() for r in rules] == ["step0(x, z1) AND step1(z1, y)"]


# ----------------------------------------------------------------------
# planner prompt
# ----------------------------------------------------------------------


def test_prompt_without_demos_carries_marker():
    prompt = assemble_planner_prompt(PLANNER_TEMPLATE, "where is it?", [])
    assert "where is it?" in prompt
    assert NO_DEMOS_MARKER in prompt


def test_prompt_orders_demos_by_rank():
    g, train = _seed_graph_and_train()
    demos = build_demonstrations("where does the employer of Sam sit?", train, g, k=2, m=5)
    prompt = assemble_planner_prompt(PLANNER_TEMPLATE, "q?", demos)
    positions = [prompt.find(d.seed_question.question) for d in demos]
    assert all(p >= 0 for p in positions)
    assert positions == sorted(positions)


def test_prompt_is_deterministic():
    g, train = _seed_graph_and_train()
    planner = RulePlanner(train, g, PLANNER_TEMPLATE, k=2, m=5)
    question = "where does the employer of Sam sit?"
    assert planner.prompt(question) == planner.prompt(question)


def test_prompt_missing_placeholder_is_an_error():
    with pytest.raises(TemplateError):
        assemble_planner_prompt("no slots here", "q?", [])
