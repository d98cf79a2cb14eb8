"""Answer-set metrics, the four-way failure taxonomy, and the
path-coverage probe for degraded graphs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .actions import Action, ActionParseFailure, ARGUMENT_ERROR, INVALID_ACTION, parse_action
from .kg import DEFAULT_MAX_LEN, KnowledgeGraph
from .questions import Question
from .trajectory import TERMINATION_MAX_STEPS, Trajectory

ERROR_CLASSES = ("IA", "EA", "EMS", "RE")


def normalize_label(label: str) -> str:
    return label.strip().casefold()


def answer_recall(predicted: Sequence[str], gold: Sequence[str]) -> float:
    """|predicted ∩ gold| / |gold| after label normalization."""
    gold_set = {normalize_label(g) for g in gold}
    if not gold_set:
        raise ValueError("gold answer set must be non-empty")
    predicted_set = {normalize_label(p) for p in predicted}
    return len(predicted_set & gold_set) / len(gold_set)


def score_question(predicted: Sequence[str], gold: Sequence[str]) -> tuple[int, float, float]:
    """(hits@1, accuracy, f1) for one question.

    hits@1 checks the first prediction; accuracy is Jaccard overlap of
    the answer sets; f1 is the harmonic mean of set precision and recall.
    Empty predictions score zero across the board.
    """
    gold_set = {normalize_label(g) for g in gold}
    if not gold_set:
        raise ValueError("gold answer set must be non-empty")
    norm_predicted = [normalize_label(p) for p in predicted]
    predicted_set = set(norm_predicted)
    if not predicted_set:
        return 0, 0.0, 0.0
    hits1 = 1 if norm_predicted[0] in gold_set else 0
    overlap = len(predicted_set & gold_set)
    accuracy = overlap / len(predicted_set | gold_set)
    if overlap == 0:
        return hits1, accuracy, 0.0
    precision = overlap / len(predicted_set)
    recall = overlap / len(gold_set)
    f1 = 2 * precision * recall / (precision + recall)
    return hits1, accuracy, f1


@dataclass
class MetricsReport:
    rows: list[dict]

    @property
    def hits1(self) -> float:
        return self._mean("hits1")

    @property
    def accuracy(self) -> float:
        return self._mean("accuracy")

    @property
    def f1(self) -> float:
        return self._mean("f1")

    def _mean(self, key: str) -> float:
        if not self.rows:
            return 0.0
        return sum(row[key] for row in self.rows) / len(self.rows)

    def to_dict(self) -> dict:
        return {
            "hits1": self.hits1,
            "accuracy": self.accuracy,
            "f1": self.f1,
            "questions": len(self.rows),
        }

    def save_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({**self.to_dict(), "rows": self.rows}, fh, indent=2)
            fh.write("\n")

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["id", "hits1", "accuracy", "f1"])
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


def score_trajectories(
    trajectories: Sequence[Trajectory], questions: Sequence[Question]
) -> MetricsReport:
    gold_by_id = {q.id: q.answer_entities for q in questions}
    rows = []
    for t in trajectories:
        gold = gold_by_id.get(t.id)
        if gold is None:
            continue
        hits1, accuracy, f1 = score_question(t.final_answers, gold)
        rows.append({"id": t.id, "hits1": hits1, "accuracy": accuracy, "f1": f1})
    return MetricsReport(rows)


# ----------------------------------------------------------------------
# failure taxonomy
# ----------------------------------------------------------------------


def classify_error(trajectory: Trajectory) -> str:
    """One class per finished trajectory, precedence IA > EA > EMS > RE,
    with OK for fully-correct clean runs. Steps are re-parsed from their
    raw action text, so classification works on loaded JSONL too."""
    saw_ea = False
    for step in trajectory.steps:
        parsed = parse_action(f"Action: {step.action_raw}" if step.action_raw else "")
        if isinstance(parsed, ActionParseFailure):
            if parsed.kind == INVALID_ACTION:
                return "IA"
            saw_ea = True
    if saw_ea:
        return "EA"
    if trajectory.termination == TERMINATION_MAX_STEPS:
        return "EMS"
    if trajectory.reward < 1.0:
        return "RE"
    return "OK"


def error_report(failures: Sequence[Trajectory]) -> dict[str, float]:
    """Percentage share per error class over failed trajectories."""
    if not failures:
        return {}
    counts = {cls: 0 for cls in ERROR_CLASSES}
    for t in failures:
        cls = classify_error(t)
        if cls == "OK":
            raise ValueError(f"trajectory {t.id} is not a failure")
        counts[cls] += 1
    total = len(failures)
    return {cls: 100.0 * n / total for cls, n in counts.items()}


def render_error_report(shares: dict[str, float]) -> str:
    """Error shares as a two-row TSV table."""
    if not shares:
        return ""
    header = "\t".join(ERROR_CLASSES)
    values = "\t".join(f"{shares.get(cls, 0.0):.2f}" for cls in ERROR_CLASSES)
    return f"{header}\n{values}\n"


# ----------------------------------------------------------------------
# path coverage
# ----------------------------------------------------------------------


def path_coverage(
    g: KnowledgeGraph,
    questions: Sequence[Question],
    max_len: int = DEFAULT_MAX_LEN,
) -> tuple[float, list[tuple[str, bool]]]:
    """Fraction of questions with at least one closed path from a question
    entity to an answer entity within ``max_len`` hops. Questions with
    unresolvable entities count as uncovered."""
    rows: list[tuple[str, bool]] = []
    for question in questions:
        covered = False
        for q_ent in question.question_entities:
            if covered or not g.has_entity(q_ent):
                continue
            for a_ent in question.answer_entities:
                if not g.has_entity(a_ent) or a_ent == q_ent:
                    continue
                if g.enumerate_closed_paths(q_ent, a_ent, max_len=max_len, cap=1):
                    covered = True
                    break
        rows.append((question.id, covered))
    fraction = sum(1 for _, c in rows if c) / len(rows) if rows else 0.0
    return fraction, rows
