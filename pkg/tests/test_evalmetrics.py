import pytest

from kgagent.evalmetrics import (
    classify_error,
    error_report,
    normalize_label,
    path_coverage,
    render_error_report,
    score_question,
    score_trajectories,
)
from kgagent.kg import construct_incomplete_kg
from kgagent.questions import Question
from kgagent.trajectory import Trajectory, TrajectoryStep

from helpers import chain_question_kg, graph_from_triples


def _step(action_raw: str) -> TrajectoryStep:
    return TrajectoryStep(
        thought="t", action_name="", action_args=[], action_raw=action_raw, observation="o"
    )


def _trajectory(action_raws, termination="finish", reward=1.0, answers=("x",)):
    return Trajectory(
        id="t0",
        question="q?",
        plan=[],
        steps=[_step(raw) for raw in action_raws],
        final_answers=list(answers),
        reward=reward,
        termination=termination,
    )


# ----------------------------------------------------------------------
# per-question scores
# ----------------------------------------------------------------------


def test_perfect_prediction():
    assert score_question(["a", "b"], ["a", "b"]) == (1, 1.0, 1.0)


def test_partial_prediction():
    hits1, accuracy, f1 = score_question(["c", "a"], ["a", "b"])
    assert hits1 == 0
    assert accuracy == pytest.approx(1 / 3)
    assert f1 == pytest.approx(0.5)


def test_empty_prediction():
    assert score_question([], ["a"]) == (0, 0.0, 0.0)


def test_empty_gold_is_contract_violation():
    with pytest.raises(ValueError):
        score_question(["a"], [])


def test_duplicate_predictions_collapse():
    hits1, accuracy, f1 = score_question(["a", "a"], ["a", "b"])
    assert hits1 == 1
    assert accuracy == pytest.approx(0.5)
    assert f1 == pytest.approx(2 / 3)


def test_labels_are_normalized():
    assert score_question(["  SF "], ["sf"]) == (1, 1.0, 1.0)
    assert normalize_label("  San Francisco ") == "san francisco"


def test_accuracy_precision_f1_ordering_chain():
    # whenever P and G overlap: accuracy <= min(precision, recall) <= f1
    import random

    rng = random.Random(8)
    vocabulary = [f"e{i}" for i in range(8)]
    checked = 0
    for _ in range(300):
        predicted = [rng.choice(vocabulary) for _ in range(rng.randint(1, 6))]
        gold = [rng.choice(vocabulary) for _ in range(rng.randint(1, 6))]
        predicted_set, gold_set = set(predicted), set(gold)
        overlap = len(predicted_set & gold_set)
        if overlap == 0:
            continue
        _, accuracy, f1 = score_question(predicted, gold)
        precision = overlap / len(predicted_set)
        recall = overlap / len(gold_set)
        assert accuracy <= min(precision, recall) + 1e-12
        assert min(precision, recall) <= f1 + 1e-12
        checked += 1
    assert checked > 50


def test_hits1_is_binary_and_f1_zero_iff_disjoint_or_empty():
    import random

    rng = random.Random(9)
    vocabulary = [f"e{i}" for i in range(6)]
    for _ in range(300):
        predicted = [rng.choice(vocabulary) for _ in range(rng.randint(0, 5))]
        gold = [rng.choice(vocabulary) for _ in range(rng.randint(1, 5))]
        hits1, _, f1 = score_question(predicted, gold)
        assert hits1 in (0, 1)
        disjoint_or_empty = not predicted or not (set(predicted) & set(gold))
        assert (f1 == 0.0) == disjoint_or_empty


def test_score_trajectories_aggregates_means():
    questions = [Question("a", "qa", (), ("x",)), Question("b", "qb", (), ("x", "y"))]
    trajectories = [
        Trajectory("a", "qa", [], [], ["x"], 1.0, "finish"),
        Trajectory("b", "qb", [], [], ["x"], 0.5, "finish"),
    ]
    report = score_trajectories(trajectories, questions)
    assert report.hits1 == pytest.approx(1.0)
    assert report.accuracy == pytest.approx((1.0 + 0.5) / 2)


# ----------------------------------------------------------------------
# failure taxonomy
# ----------------------------------------------------------------------


def test_unknown_action_name_classifies_ia():
    trajectory = _trajectory(["lookup(x)", "finish(x)"], reward=1.0)
    assert classify_error(trajectory) == "IA"


def test_bad_arguments_classify_ea():
    trajectory = _trajectory(["wikiSearch(Sam)", "finish(x)"], reward=1.0)
    assert classify_error(trajectory) == "EA"


def test_ia_takes_precedence_over_ea():
    trajectory = _trajectory(["wikiSearch(Sam)", "lookup(x)", "finish(x)"], reward=0.0)
    assert classify_error(trajectory) == "IA"


def test_step_exhaustion_classifies_ems():
    raws = ["searchNeighbor(a, r)"] * 10
    trajectory = _trajectory(raws, termination="max_steps", reward=0.0, answers=())
    assert classify_error(trajectory) == "EMS"


def test_wrong_answer_classifies_re():
    trajectory = _trajectory(["searchNeighbor(a, r)", "finish(x)"], reward=0.4)
    assert classify_error(trajectory) == "RE"


def test_clean_full_reward_is_ok():
    trajectory = _trajectory(["searchNeighbor(a, r)", "finish(x)"], reward=1.0)
    assert classify_error(trajectory) == "OK"


def test_error_report_even_split():
    failures = [_trajectory(["lookup(x)"], reward=0.0) for _ in range(50)]
    failures += [_trajectory(["finish(x)"], reward=0.5) for _ in range(50)]
    shares = error_report(failures)
    assert shares == {"IA": 50.0, "EA": 0.0, "EMS": 0.0, "RE": 50.0}
    assert sum(shares.values()) == pytest.approx(100.0, abs=0.01)


def test_error_report_single_failure():
    shares = error_report([_trajectory(["finish(x)"], reward=0.0)])
    assert shares["RE"] == 100.0


def test_error_report_rejects_clean_trajectories():
    with pytest.raises(ValueError):
        error_report([_trajectory(["finish(x)"], reward=1.0)])


def test_error_report_empty_input():
    assert error_report([]) == {}
    assert render_error_report({}) == ""


def test_error_report_tsv_rendering():
    text = render_error_report({"IA": 3.77, "EA": 0.0, "EMS": 1.89, "RE": 94.34})
    assert text == "IA\tEA\tEMS\tRE\n3.77\t0.00\t1.89\t94.34\n"


# ----------------------------------------------------------------------
# path coverage
# ----------------------------------------------------------------------


def test_coverage_zero_when_all_paths_lost():
    rows, questions = chain_question_kg(5, hops=2)
    g = graph_from_triples(rows)
    degraded, removed = construct_incomplete_kg(g, questions, 1.0, seed=0)
    fraction, per_question = path_coverage(degraded, questions)
    assert fraction == 0.0
    assert all(covered is False for _, covered in per_question)


def test_coverage_restored_by_re_adding_removed_triples():
    rows, questions = chain_question_kg(5, hops=2)
    g = graph_from_triples(rows)
    before, _ = path_coverage(g, questions)
    degraded, removed = construct_incomplete_kg(g, questions, 1.0, seed=0)
    for h, r, t in removed:
        degraded.add(h, r, t)
    after, _ = path_coverage(degraded, questions)
    assert before == after == 1.0


def test_coverage_monotone_under_insertion():
    rows, questions = chain_question_kg(6, hops=2)
    g = graph_from_triples(rows)
    degraded, removed = construct_incomplete_kg(g, questions, 1.0, seed=3)
    last = path_coverage(degraded, questions)[0]
    for h, r, t in removed:
        degraded.add(h, r, t)
        current = path_coverage(degraded, questions)[0]
        assert current >= last
        last = current
    assert last == 1.0


def test_unresolvable_entities_count_as_uncovered(sam_graph):
    questions = [
        Question("a", "good", ("Sam",), ("SF",)),
        Question("b", "ghost", ("Ghost",), ("SF",)),
    ]
    fraction, per_question = path_coverage(sam_graph, questions)
    assert fraction == 0.5
    assert dict(per_question) == {"a": True, "b": False}
