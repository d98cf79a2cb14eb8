"""Relation-chain rules: mining from paths, text grammar, and the few-shot
planning prompt built from retrieved seed questions.

Rule grammar (one rule per line):

    rel1(x, z1) AND rel2(z1, y)

Variables chain left to right through ``x, z1..z{L-1}, y``; a relation may
carry the ``^-1`` suffix to walk an edge backwards. Serialize/parse round
trips on this canonical form.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .bm25 import Bm25Index, bm25_build
from .errors import TemplateError
from .kg import DEFAULT_MAX_LEN, ClosedPath, KnowledgeGraph
from .questions import Question

logger = logging.getLogger(__name__)

NO_DEMOS_MARKER = "(no demonstrations available)"

# atom: relation(var1, var2); relation labels may contain dots, slashes,
# hyphens and the ^-1 marker, but no parens, commas, or whitespace
_ATOM_RE = re.compile(r"([^\s(),]+)\s*\(\s*([A-Za-z][A-Za-z0-9_]*)\s*,\s*([A-Za-z][A-Za-z0-9_]*)\s*\)")
_AND_RE = re.compile(r"\s+(?:AND|and|∧)\s+")


@dataclass(frozen=True)
class RuleBody:
    """A closed relation chain with entities abstracted to variables."""

    relations: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.relations:
            raise ValueError("rule body must have at least one relation")

    def __len__(self) -> int:
        return len(self.relations)

    def variables(self) -> tuple[str, ...]:
        inner = tuple(f"z{i}" for i in range(1, len(self.relations)))
        return ("x",) + inner + ("y",)

    def serialize(self) -> str:
        names = self.variables()
        atoms = [
            f"{rel}({names[i]}, {names[i + 1]})"
            for i, rel in enumerate(self.relations)
        ]
        return " AND ".join(atoms)


def generalize(g: KnowledgeGraph, path: ClosedPath) -> RuleBody:
    """Replace a path's entities with chained variables, keeping the
    relation sequence and direction markers."""
    if len(path) < 1:
        raise ValueError("cannot generalize an empty path")
    return RuleBody(path.relation_labels(g))


def parse_rule_line(line: str) -> RuleBody | None:
    """Parse one line of the rule grammar; None when it does not fit."""
    line = line.strip()
    if not line:
        return None
    parts = _AND_RE.split(line)
    relations: list[str] = []
    prev_var: str | None = None
    for part in parts:
        m = _ATOM_RE.fullmatch(part.strip())
        if m is None:
            return None
        rel, left, right = m.groups()
        if left == right:
            return None
        if prev_var is not None and left != prev_var:
            return None  # consecutive atoms must share the chain variable
        prev_var = right
        relations.append(rel)
    if not relations:
        return None
    return RuleBody(tuple(relations))


def parse_rule_bodies(text: str) -> tuple[list[RuleBody], int]:
    """Best-effort extraction of rule lines from generated text.

    Returns the parsed rules in order plus a count of skipped non-empty
    lines that did not match the grammar.
    """
    rules: list[RuleBody] = []
    skipped = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        rule = parse_rule_line(line)
        if rule is None:
            skipped += 1
        else:
            rules.append(rule)
    return rules, skipped


# ----------------------------------------------------------------------
# demonstrations
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Demonstration:
    """A retrieved seed question with rules mined from its gold paths."""

    seed_question: Question
    rule_bodies: tuple[RuleBody, ...]


def mine_rule_bodies(
    g: KnowledgeGraph,
    question: Question,
    m: int,
    max_len: int = DEFAULT_MAX_LEN,
) -> list[RuleBody]:
    """Up to ``m`` distinct rules generalized from closed paths between the
    question's entities and answers, shortest paths first."""
    paths: list[ClosedPath] = []
    for q_ent in question.question_entities:
        if not g.has_entity(q_ent):
            continue
        for a_ent in question.answer_entities:
            if not g.has_entity(a_ent) or a_ent == q_ent:
                continue
            paths.extend(g.enumerate_closed_paths(q_ent, a_ent, max_len=max_len, cap=m))
    paths.sort(key=len)
    rules: list[RuleBody] = []
    seen: set[tuple[str, ...]] = set()
    for path in paths:
        rule = generalize(g, path)
        if rule.relations not in seen:
            seen.add(rule.relations)
            rules.append(rule)
        if len(rules) >= m:
            break
    return rules


def build_demonstrations(
    question: str,
    train: Sequence[Question],
    g_full: KnowledgeGraph,
    k: int = 3,
    m: int = 5,
    max_len: int = DEFAULT_MAX_LEN,
    index: Bm25Index | None = None,
) -> list[Demonstration]:
    """Retrieve seed questions by BM25 and mine rules for each on the full
    (pre-removal) graph. Seeds without any closed path are skipped and
    backfilled by the next hit; at most ``k`` demonstrations result."""
    if not train:
        return []
    if index is None:
        index = bm25_build([q.question for q in train])
    demos: list[Demonstration] = []
    for doc_id, _score in index.retrieve(question, k=len(train)):
        seed = train[doc_id]
        rules = mine_rule_bodies(g_full, seed, m=m, max_len=max_len)
        if not rules:
            continue
        demos.append(Demonstration(seed, tuple(rules)))
        if len(demos) >= k:
            break
    return demos


def render_demonstrations(demos: Sequence[Demonstration]) -> str:
    if not demos:
        return NO_DEMOS_MARKER
    blocks = []
    for demo in demos:
        lines = [f"Question: {demo.seed_question.question}"]
        lines.extend(rule.serialize() for rule in demo.rule_bodies)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def assemble_planner_prompt(template: str, question: str, demos: Sequence[Demonstration]) -> str:
    """Fill the planning template; it must contain both placeholders."""
    for placeholder in ("{{question}}", "{{demonstrations}}"):
        if placeholder not in template:
            raise TemplateError(f"planner template is missing {placeholder}")
    return template.replace("{{demonstrations}}", render_demonstrations(demos)).replace(
        "{{question}}", question
    )


class RulePlanner:
    """Bundles the seed-question index, the full graph, and the prompt
    template into one planning interface for the environment."""

    def __init__(
        self,
        train: Sequence[Question],
        g_full: KnowledgeGraph,
        template: str,
        k: int = 3,
        m: int = 5,
        max_len: int = DEFAULT_MAX_LEN,
    ):
        self.train = list(train)
        self.g_full = g_full
        self.template = template
        self.k = k
        self.m = m
        self.max_len = max_len
        self._index = bm25_build([q.question for q in self.train]) if self.train else None

    def demonstrations(self, question: str) -> list[Demonstration]:
        if not self.train:
            return []
        return build_demonstrations(
            question,
            self.train,
            self.g_full,
            k=self.k,
            m=self.m,
            max_len=self.max_len,
            index=self._index,
        )

    def prompt(self, question: str) -> str:
        return assemble_planner_prompt(self.template, question, self.demonstrations(question))


# ----------------------------------------------------------------------
# demonstrations cache file
# ----------------------------------------------------------------------


def save_demonstrations(
    rows: Iterable[tuple[Question, Sequence[RuleBody]]], path: str | Path
) -> int:
    """Write a JSONL cache of mined rules keyed by question."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for question, rules in rows:
            record = {
                "question_id": question.id,
                "question": question.question,
                "rules": [r.serialize() for r in rules],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count
