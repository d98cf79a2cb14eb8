"""Question records and their JSONL interchange format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable


@dataclass(frozen=True)
class Question:
    """One QA item: natural-language text plus its graph anchor entities."""

    id: str
    question: str
    question_entities: tuple[str, ...] = ()
    answer_entities: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "question_entities": list(self.question_entities),
            "answer_entities": list(self.answer_entities),
        }

    @classmethod
    def from_record(cls, record: dict) -> "Question":
        return cls(
            id=str(record["id"]),
            question=record["question"],
            question_entities=tuple(record.get("question_entities", [])),
            answer_entities=tuple(record.get("answer_entities", [])),
        )


def load_questions(path: str | Path) -> list[Question]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Question.from_record(json.loads(line)))
    return out


def save_questions(questions: Iterable[Question], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q in questions:
            fh.write(json.dumps(q.to_record(), ensure_ascii=False) + "\n")
            count += 1
    return count
