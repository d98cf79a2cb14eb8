"""Episode records and their JSONL interchange format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

TERMINATION_FINISH = "finish"
TERMINATION_MAX_STEPS = "max_steps"


@dataclass
class TrajectoryStep:
    thought: str
    action_name: str
    action_args: list[str]
    action_raw: str
    observation: str

    def to_record(self) -> dict:
        return {
            "thought": self.thought,
            "action": {"name": self.action_name, "args": list(self.action_args)},
            "action_raw": self.action_raw,
            "observation": self.observation,
        }

    @classmethod
    def from_record(cls, record: dict) -> "TrajectoryStep":
        return cls(
            thought=record["thought"],
            action_name=record["action"]["name"],
            action_args=list(record["action"]["args"]),
            action_raw=record["action_raw"],
            observation=record["observation"],
        )


@dataclass
class Trajectory:
    """One finished episode: the plan it was conditioned on, its steps,
    and the outcome. ``intro`` (the first user message the policy saw)
    and ``extracted`` (triples buffered during the episode) are
    runtime-only and not serialized."""

    id: str
    question: str
    plan: list[str]
    steps: list[TrajectoryStep]
    final_answers: list[str]
    reward: float
    termination: str
    refined: bool = False
    intro: str = ""
    extracted: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def num_steps(self) -> int:
        return len(self.steps)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "plan": list(self.plan),
            "steps": [s.to_record() for s in self.steps],
            "final_answers": list(self.final_answers),
            "reward": self.reward,
            "termination": self.termination,
            "refined": self.refined,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Trajectory":
        return cls(
            id=str(record["id"]),
            question=record["question"],
            plan=list(record["plan"]),
            steps=[TrajectoryStep.from_record(s) for s in record["steps"]],
            final_answers=list(record["final_answers"]),
            reward=float(record["reward"]),
            termination=record["termination"],
            refined=bool(record["refined"]),
        )


def save_trajectories(trajectories: Iterable[Trajectory], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in trajectories:
            fh.write(json.dumps(t.to_record(), ensure_ascii=False) + "\n")
            count += 1
    return count


def load_trajectories(path: str | Path) -> list[Trajectory]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Trajectory.from_record(json.loads(line)))
    return out
