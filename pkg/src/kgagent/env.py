"""The graph environment: one instance per episode.

Episodes follow the thought-action-observation loop. The graph is never
mutated during an episode; facts extracted from documents are buffered
on the episode and committed by the caller afterwards, which keeps
episodes replayable and concurrent episodes isolated.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Any, Callable, Sequence

from .actions import (
    ARGUMENT_ERROR,
    FINISH,
    GET_REASONING_PATH,
    INVALID_ACTION,
    SEARCH_NEIGHBOR,
    TOOL_SIGNATURES,
    WIKI_SEARCH,
    Action,
    ActionParseFailure,
    parse_action,
)
from .errors import EnvContractError, EntityNotFoundError
from .kg import KnowledgeGraph
from .policy import (
    TAG_AGENT,
    TAG_EXTRACT,
    TAG_PLANNER,
    ChatMessage,
    Policy,
    PolicyContext,
    build_agent_prompt,
    parse_react,
    render_observation,
    render_step,
    render_task_intro,
)
from .questions import Question
from .rules import RuleBody, RulePlanner, parse_rule_bodies
from .retriever import Retriever
from .templates import TemplateSet
from .trajectory import (
    TERMINATION_FINISH,
    TERMINATION_MAX_STEPS,
    Trajectory,
    TrajectoryStep,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 10
DEFAULT_LIST_LIMIT = 30
DEFAULT_TOP_DOCS = 3


@dataclass(frozen=True)
class Observation:
    text: str
    payload: Any = None


def truncate_list(items: Sequence[str], limit: int) -> str:
    if len(items) <= limit:
        return ", ".join(items)
    shown = ", ".join(items[:limit])
    return f"{shown} (+{len(items) - limit} more)"


class AgentEnv:
    """Environment state and tool dispatch for a single episode."""

    def __init__(
        self,
        question: Question,
        graph: KnowledgeGraph,
        templates: TemplateSet,
        planner: RulePlanner | None = None,
        retriever: Retriever | None = None,
        plan: Sequence[RuleBody] | None = None,
        max_steps: int = DEFAULT_MAX_STEPS,
        list_limit: int = DEFAULT_LIST_LIMIT,
        top_docs: int = DEFAULT_TOP_DOCS,
        system_suffix: str = "",
    ):
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.question = question
        self.graph = graph
        self.templates = templates
        self.planner = planner
        self.retriever = retriever
        self.plan = [rule.serialize() for rule in (plan or [])]
        self.max_steps = max_steps
        self.list_limit = list_limit
        self.top_docs = top_docs
        self.system_suffix = system_suffix

        self.step_count = 0
        self.done = False
        self.termination: str | None = None
        self.final_answers: list[str] = []
        self.steps: list[TrajectoryStep] = []
        self.buffered_triples: list[tuple[str, str, str]] = []
        self._intro = ""

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    def reset(self) -> Observation:
        self.step_count = 0
        self.done = False
        self.termination = None
        self.final_answers = []
        self.steps = []
        self.buffered_triples = []
        notes = []
        for ent in self.question.question_entities:
            if self.graph.has_entity(ent):
                notes.append(ent)
            else:
                notes.append(f"{ent} (not in graph)")
                logger.warning(
                    "episode=%s question entity %r missing from graph", self.question.id, ent
                )
        self._intro = render_task_intro(self.question.question, notes, self.plan)
        return Observation(self._intro)

    @property
    def intro(self) -> str:
        return self._intro

    def policy_context(self) -> PolicyContext:
        return PolicyContext(
            question=self.question.question,
            intro=self._intro,
            plan=tuple(self.plan),
            history=tuple((s.thought, s.action_raw, s.observation) for s in self.steps),
            system_suffix=self.system_suffix,
        )

    def trace_text(self) -> str:
        """The episode so far as plain text, for extraction and critique prompts."""
        parts = [self._intro]
        for s in self.steps:
            parts.append(render_step(s.thought, s.action_raw))
            parts.append(render_observation(s.observation))
        return "\n".join(parts)

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------

    def step(
        self,
        thought: str,
        action_raw: str,
        action: Action | ActionParseFailure,
        policy: Policy | None = None,
    ) -> tuple[Observation, bool]:
        """Dispatch one action (or a parse failure, which consumes a step
        with an instructive observation) and advance the episode."""
        if self.done:
            raise EnvContractError("step() called on a finished episode")

        if isinstance(action, ActionParseFailure):
            observation = self._exec_failure(action)
            name, args = action.name, []
        else:
            name, args = action.name, list(action.args)
            if name == FINISH:
                observation = self.exec_finish(action.args)
            elif name == SEARCH_NEIGHBOR:
                observation = self.exec_search_neighbor(action.args[0], action.args[1])
            elif name == GET_REASONING_PATH:
                observation = self.exec_get_reasoning_path(action.args[0], policy)
            elif name == WIKI_SEARCH:
                observation = self.exec_wiki_search(action.args[0], action.args[1], policy)
            else:  # pragma: no cover - parse_action only admits the above
                raise EnvContractError(f"unexpected action {name!r}")

        self.step_count += 1
        if not self.done and self.step_count >= self.max_steps:
            self.done = True
            self.termination = TERMINATION_MAX_STEPS
        self.steps.append(
            TrajectoryStep(
                thought=thought,
                action_name=name,
                action_args=args,
                action_raw=action_raw,
                observation=observation.text,
            )
        )
        return observation, self.done

    # ------------------------------------------------------------------
    # tools
    # ------------------------------------------------------------------

    def _exec_failure(self, failure: ActionParseFailure) -> Observation:
        signatures = "; ".join(TOOL_SIGNATURES)
        if failure.kind == INVALID_ACTION:
            text = (
                f"Invalid action ({failure.detail}). Respond with a line "
                f"'Action: tool(arguments)' using one of: {signatures}."
            )
        else:
            text = f"Argument error ({failure.detail}). Tool signatures: {signatures}."
        return Observation(text, payload=failure)

    def exec_get_reasoning_path(self, sub_question: str, policy: Policy | None) -> Observation:
        if self.planner is None or policy is None:
            return Observation("No planner is configured; explore with searchNeighbor.")
        prompt = self.planner.prompt(sub_question)
        messages = [
            ChatMessage("system", self.templates.text("planner_system")),
            ChatMessage("user", prompt),
        ]
        raw = policy.generate(messages, tag=TAG_PLANNER)
        rules, skipped = parse_rule_bodies(raw)
        if skipped:
            logger.debug("episode=%s planner emitted %d unparsable lines", self.question.id, skipped)
        if not rules:
            return Observation("No rules found for this sub-question.", payload=[])
        lines = [rule.serialize() for rule in rules[: self.list_limit]]
        return Observation("Candidate rules:\n" + "\n".join(lines), payload=rules)

    def exec_search_neighbor(self, ent: str, rel: str) -> Observation:
        try:
            found = self.graph.neighbors(ent, rel)
        except EntityNotFoundError:
            return Observation(f"Entity '{ent}' is not in the graph.", payload=[])
        if not found:
            return Observation(f"No neighbors of '{ent}' via '{rel}'.", payload=[])
        return Observation(truncate_list(found, self.list_limit), payload=found)

    def exec_wiki_search(self, ent: str, rel: str, policy: Policy | None) -> Observation:
        if self.retriever is None:
            return Observation("No document corpus is configured.", payload=[])
        docs = self.retriever.search(f"{ent} {rel}", self.top_docs)
        if not docs:
            return Observation("No documents found.", payload=[])
        extracted = self.exec_extract_triples(ent, rel, docs, policy)
        titles = "; ".join(d.title or d.doc_id for d in docs)
        if extracted:
            rows = [f"{h}\t{r}\t{t}" for h, r, t in extracted[: self.list_limit]]
            text = f"Documents: {titles}\nExtracted triples:\n" + "\n".join(rows)
        else:
            text = f"Documents: {titles}\nNo triples could be extracted."
        return Observation(text, payload={"documents": docs, "triples": extracted})

    def exec_extract_triples(self, ent, rel, docs, policy: Policy | None) -> list[tuple[str, str, str]]:
        """Auto-triggered after wikiSearch: one extraction call per document;
        well-formed TSV lines are buffered for a post-episode commit."""
        if policy is None:
            return []
        extracted: list[tuple[str, str, str]] = []
        history = self.trace_text()
        for doc in docs:
            prompt = self.templates.render(
                "extract",
                entity=ent,
                relation=rel,
                history=history,
                title=doc.title or doc.doc_id,
                text=doc.text,
            )
            messages = [
                ChatMessage("system", self.templates.text("extract_system")),
                ChatMessage("user", prompt),
            ]
            raw = policy.generate(messages, tag=TAG_EXTRACT)
            for line in raw.splitlines():
                fields = [f.strip() for f in line.split("\t")]
                if len(fields) == 3 and all(fields):
                    triple = (fields[0], fields[1], fields[2])
                    extracted.append(triple)
                    self.buffered_triples.append(triple)
                elif line.strip():
                    logger.debug("episode=%s unparsable extraction line: %r", self.question.id, line)
        return extracted

    def exec_finish(self, args: Sequence[str]) -> Observation:
        answers: list[str] = []
        for arg in args:
            if arg not in answers:
                answers.append(arg)
        self.final_answers = answers
        self.done = True
        self.termination = TERMINATION_FINISH
        return Observation("Final answers: " + ", ".join(answers), payload=answers)

    # ------------------------------------------------------------------
    # outcome
    # ------------------------------------------------------------------

    def trajectory(self, refined: bool = False) -> Trajectory:
        if not self.done:
            raise EnvContractError("episode is not finished")
        return Trajectory(
            id=self.question.id,
            question=self.question.question,
            plan=list(self.plan),
            steps=list(self.steps),
            final_answers=list(self.final_answers),
            reward=0.0,
            termination=self.termination or TERMINATION_MAX_STEPS,
            refined=refined,
            intro=self._intro,
            extracted=list(self.buffered_triples),
        )


EnvFactory = Callable[..., AgentEnv]


def make_env_factory(
    graph: KnowledgeGraph,
    templates: TemplateSet,
    planner: RulePlanner | None = None,
    retriever: Retriever | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    list_limit: int = DEFAULT_LIST_LIMIT,
    top_docs: int = DEFAULT_TOP_DOCS,
) -> EnvFactory:
    """Factory over a shared read-only graph; one environment per episode."""

    def factory(question: Question, plan=None, system_suffix: str = "") -> AgentEnv:
        return AgentEnv(
            question=question,
            graph=graph,
            templates=templates,
            planner=planner,
            retriever=retriever,
            plan=plan,
            max_steps=max_steps,
            list_limit=list_limit,
            top_docs=top_docs,
            system_suffix=system_suffix,
        )

    return factory


def plan_rules(env: AgentEnv, policy: Policy) -> list[RuleBody]:
    """Run the planner once for an environment's question, before reset."""
    if env.planner is None:
        return []
    prompt = env.planner.prompt(env.question.question)
    messages = [
        ChatMessage("system", env.templates.text("planner_system")),
        ChatMessage("user", prompt),
    ]
    rules, _skipped = parse_rule_bodies(policy.generate(messages, tag=TAG_PLANNER))
    return rules


def run_episode(env: AgentEnv, policy: Policy, plan_first: bool = False) -> Trajectory:
    """Drive one episode to termination. Reward is attached by the caller.

    With ``plan_first`` the planner proposes rules before the episode
    starts and they become part of the task intro (and of the stored
    trajectory's plan). Raises PolicyUnavailableError when the policy
    backend gives out; the caller decides whether that fails the run or
    just the episode.
    """
    if plan_first and env.planner is not None:
        env.plan = [rule.serialize() for rule in plan_rules(env, policy)]
    env.reset()
    system_text = env.templates.text("agent_system")
    while not env.done:
        messages = build_agent_prompt(env.policy_context(), system_text)
        started = time.perf_counter()
        generation = policy.generate(messages, tag=TAG_AGENT)
        thought, action_raw = parse_react(generation)
        parsed = parse_action(generation)
        observation, _done = env.step(thought, action_raw, parsed, policy=policy)
        logger.info(
            "episode=%s step=%d action=%s latency_ms=%.1f",
            env.question.id,
            env.step_count,
            parsed.name if isinstance(parsed, Action) else parsed.kind,
            (time.perf_counter() - started) * 1000,
        )
    return env.trajectory()
