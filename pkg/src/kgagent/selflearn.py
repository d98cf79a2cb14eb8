"""Self-learning: explore the environment, refine low-reward attempts,
merge pairs by final-answer consistency, and emit masked fine-tuning data.

An external train step plugs in between iterations. The built-in replay
surrogate trains by memorizing the best trajectory per question, which
is enough to exercise the full loop without a gradient stack.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .errors import EmptyDatasetError, PolicyUnavailableError
from .evalmetrics import answer_recall, score_trajectories
from .env import EnvFactory, run_episode
from .policy import Policy, ReplayPolicy, render_observation, render_step, render_trace
from .questions import Question
from .templates import TemplateSet
from .trajectory import Trajectory, save_trajectories

logger = logging.getLogger(__name__)

ORIGIN_EXPLORED = "explored"
ORIGIN_REFINED = "refined"


def compute_reward(predicted: Sequence[str], gold: Sequence[str]) -> float:
    """Outcome reward: recall of the final answers against gold."""
    return answer_recall(predicted, gold)


@dataclass
class RewardedTrajectory:
    trajectory: Trajectory
    reward: float
    origin: str

    @property
    def id(self) -> str:
        return self.trajectory.id


@dataclass
class MergedSet:
    survivors: list[RewardedTrajectory]
    filtered: int


@dataclass
class ExploreResult:
    rewarded: list[RewardedTrajectory]
    failures: list[str]  # question ids whose policy backend gave out

    @property
    def mean_reward(self) -> float:
        if not self.rewarded:
            return 0.0
        return sum(r.reward for r in self.rewarded) / len(self.rewarded)


def _run_rewarded(
    question: Question,
    env_factory: EnvFactory,
    policy: Policy,
    plan_first: bool,
    system_suffix: str = "",
    refined: bool = False,
) -> RewardedTrajectory:
    env = env_factory(question, system_suffix=system_suffix)
    trajectory = run_episode(env, policy, plan_first=plan_first)
    trajectory.refined = refined
    trajectory.reward = compute_reward(trajectory.final_answers, question.answer_entities)
    return RewardedTrajectory(
        trajectory, trajectory.reward, ORIGIN_REFINED if refined else ORIGIN_EXPLORED
    )


def explore(
    policy: Policy,
    env_factory: EnvFactory,
    questions: Sequence[Question],
    concurrency: int = 1,
    plan_first: bool = False,
) -> ExploreResult:
    """One rewarded trajectory per question. Episodes whose policy backend
    fails are dropped and reported separately; results keep input order
    regardless of worker count."""
    results: list[RewardedTrajectory | None] = [None] * len(questions)
    failures: list[str] = []

    def run(i: int) -> None:
        try:
            results[i] = _run_rewarded(questions[i], env_factory, policy, plan_first)
        except PolicyUnavailableError as exc:
            logger.warning("episode %s failed: %s", questions[i].id, exc)
            failures.append(questions[i].id)

    if concurrency <= 1:
        for i in range(len(questions)):
            run(i)
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            list(pool.map(run, range(len(questions))))
    return ExploreResult([r for r in results if r is not None], sorted(failures))


def refine(
    policy: Policy,
    explored: Sequence[RewardedTrajectory],
    env_factory: EnvFactory,
    templates: TemplateSet,
    questions: Sequence[Question],
    concurrency: int = 1,
    plan_first: bool = False,
) -> list[RewardedTrajectory]:
    """Re-run each explored episode with a critique of the previous attempt
    prepended to the system context. A per-item policy failure falls back
    to a copy of the original marked as refined."""
    by_id = {q.id: q for q in questions}
    results: list[RewardedTrajectory | None] = [None] * len(explored)
    fallback_count = 0

    def run(i: int) -> None:
        nonlocal fallback_count
        item = explored[i]
        question = by_id[item.id]
        critique = templates.render(
            "refine",
            reward=f"{item.reward:g}",
            trajectory=render_trace(item.trajectory),
        )
        try:
            results[i] = _run_rewarded(
                question, env_factory, policy, plan_first,
                system_suffix=critique, refined=True,
            )
        except PolicyUnavailableError as exc:
            logger.warning("refinement of %s failed, keeping original: %s", item.id, exc)
            fallback_count += 1
            copied = Trajectory.from_record(item.trajectory.to_record())
            copied.refined = True
            copied.intro = item.trajectory.intro
            results[i] = RewardedTrajectory(copied, item.reward, ORIGIN_REFINED)

    if concurrency <= 1:
        for i in range(len(explored)):
            run(i)
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            list(pool.map(run, range(len(explored))))
    if fallback_count:
        logger.info("refine: %d identity fallbacks", fallback_count)
    return [r for r in results if r is not None]


def merge(
    explored: Sequence[RewardedTrajectory], refined: Sequence[RewardedTrajectory]
) -> MergedSet:
    """Per-pair selection by final-answer consistency: the higher reward
    wins; on a non-zero tie the fewer-step trajectory wins (the refined
    one when still tied); double-zero pairs are filtered out."""
    if len(explored) != len(refined):
        raise ValueError("explored and refined collections must align 1:1")
    survivors: list[RewardedTrajectory] = []
    filtered = 0
    for original, redo in zip(explored, refined):
        if original.id != redo.id:
            raise ValueError(f"misaligned pair: {original.id} vs {redo.id}")
        if original.reward > redo.reward:
            survivors.append(original)
        elif original.reward < redo.reward:
            survivors.append(redo)
        elif original.reward == 0:
            filtered += 1
        elif original.trajectory.num_steps < redo.trajectory.num_steps:
            survivors.append(original)
        else:
            survivors.append(redo)
    return MergedSet(survivors, filtered)


# ----------------------------------------------------------------------
# masked fine-tuning data
# ----------------------------------------------------------------------


def sft_messages(trajectory: Trajectory, system_text: str) -> list[dict]:
    """The episode as a role-tagged dialogue with the training mask on
    exactly the agent-generated turns. Rendering matches what
    build_agent_prompt produced at each step; the observation after the
    terminal step is dropped."""
    messages = [
        {"role": "system", "content": system_text, "train": False},
        {"role": "user", "content": trajectory.intro, "train": False},
    ]
    for i, step in enumerate(trajectory.steps):
        messages.append(
            {"role": "assistant", "content": render_step(step.thought, step.action_raw), "train": True}
        )
        if i < len(trajectory.steps) - 1:
            messages.append(
                {"role": "user", "content": render_observation(step.observation), "train": False}
            )
    return messages


def emit_sft(merged: MergedSet, out_path: str | Path, templates: TemplateSet) -> int:
    """Write one masked dialogue per survivor as JSONL. Deterministic:
    re-emitting the same set yields a byte-identical file."""
    if not merged.survivors:
        raise EmptyDatasetError("no surviving trajectories to emit")
    system_text = templates.text("agent_system")
    count = 0
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for item in merged.survivors:
            record = {
                "id": item.trajectory.id,
                "messages": sft_messages(item.trajectory, system_text),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count


# ----------------------------------------------------------------------
# iterative updating
# ----------------------------------------------------------------------


@dataclass
class TrainOutcome:
    """What a train step hands back: a new policy to explore with, or a
    checkpoint path an external backend will serve, or both."""

    policy: Policy | None = None
    checkpoint: str | None = None


TrainStep = Callable[[int, MergedSet, Path], TrainOutcome]


def replay_train_step() -> TrainStep:
    """The gradient-free surrogate: accumulate the best trajectory per
    question across iterations and explore by replaying it."""
    store: dict[str, Trajectory] = {}
    best: dict[str, float] = {}

    def train(iteration: int, merged: MergedSet, sft_path: Path) -> TrainOutcome:
        for item in merged.survivors:
            key = item.trajectory.question
            if item.reward >= best.get(key, -1.0):
                store[key] = item.trajectory
                best[key] = item.reward
        return TrainOutcome(policy=ReplayPolicy(dict(store)))

    return train


def iterate(
    policy: Policy,
    env_factory: EnvFactory,
    questions: Sequence[Question],
    validation: Sequence[Question],
    train_step: TrainStep,
    templates: TemplateSet,
    out_dir: str | Path,
    iterations: int = 2,
    epsilon_points: float = 0.5,
    concurrency: int = 1,
    plan_first: bool = False,
) -> dict:
    """explore -> refine -> merge -> emit -> train -> validate, stopping
    when the validation hits@1 gain drops below ``epsilon_points``
    (percentage points) or after ``iterations`` rounds."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report: dict = {"iterations": [], "stopped": ""}

    def validate(p: Policy) -> dict:
        result = explore(p, env_factory, validation, concurrency=concurrency, plan_first=plan_first)
        metrics = score_trajectories([r.trajectory for r in result.rewarded], validation)
        return {"hits1": metrics.hits1, "accuracy": metrics.accuracy, "f1": metrics.f1}

    previous_hits1 = validate(policy)["hits1"] if validation else 0.0

    for iteration in range(1, iterations + 1):
        explored = explore(policy, env_factory, questions, concurrency=concurrency, plan_first=plan_first)
        refined = refine(
            policy, explored.rewarded, env_factory, templates, questions,
            concurrency=concurrency, plan_first=plan_first,
        )
        merged = merge(explored.rewarded, refined)

        trajectories_path = out_dir / f"iteration_{iteration}_trajectories.jsonl"
        save_trajectories([r.trajectory for r in merged.survivors], trajectories_path)
        sft_path = out_dir / f"iteration_{iteration}_sft.jsonl"
        if merged.survivors:
            emit_sft(merged, sft_path, templates)
        else:
            report["stopped"] = "no survivors"
            break

        try:
            outcome = train_step(iteration, merged, sft_path)
        except Exception as exc:
            logger.error("train step failed at iteration %d: %s", iteration, exc)
            report["stopped"] = f"train step failed: {exc}"
            break
        if outcome.policy is not None:
            policy = outcome.policy

        validation_metrics = validate(policy) if validation else {"hits1": 0.0, "accuracy": 0.0, "f1": 0.0}
        entry = {
            "mean_reward": explored.mean_reward,
            "filtered": merged.filtered,
            "survivors": len(merged.survivors),
            "validation": validation_metrics,
            "artifacts": {"trajectories": str(trajectories_path), "sft": str(sft_path)},
        }
        if outcome.checkpoint:
            entry["checkpoint"] = outcome.checkpoint
        report["iterations"].append(entry)

        gain_points = (validation_metrics["hits1"] - previous_hits1) * 100.0
        previous_hits1 = validation_metrics["hits1"]
        if validation and gain_points < epsilon_points:
            report["stopped"] = f"validation gain {gain_points:.2f} points below {epsilon_points}"
            break
    if not report["stopped"]:
        report["stopped"] = "max iterations"
    return report
