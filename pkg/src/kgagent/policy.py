"""The policy boundary: chat-message prompt assembly, react-format
parsing, an HTTP chat backend, and deterministic test doubles.

One policy handle serves the executor, the planner, triple extraction,
and refinement; calls are distinguished by a ``tag`` so doubles can
route them. The HTTP backend ignores the tag.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import requests

from .errors import PolicyUnavailableError
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

TAG_AGENT = "agent"
TAG_PLANNER = "planner"
TAG_EXTRACT = "extract"

REPLAY_FALLBACK = "Action: finish(unknown)"

_QUESTION_LINE_RE = re.compile(r"^Question: (.*)$", re.MULTILINE)


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class PolicyContext:
    """Everything needed to rebuild the episode prompt deterministically."""

    question: str
    intro: str  # first user message: question, entities, plan
    plan: tuple[str, ...] = ()
    history: tuple[tuple[str, str, str], ...] = ()  # (thought, action_raw, observation)
    system_suffix: str = ""  # e.g. a refinement critique


def render_step(thought: str, action_raw: str) -> str:
    """Canonical text of one agent turn; parse_react inverts this."""
    return f"Thought: {thought}\nAction: {action_raw}"


def render_observation(observation: str) -> str:
    return f"Observation: {observation}"


def render_task_intro(question: str, entity_notes: Sequence[str], plan: Sequence[str]) -> str:
    """The fixed first user message: question, its entities, and the plan."""
    lines = [f"Question: {question}"]
    if entity_notes:
        lines.append("Question entities: " + ", ".join(entity_notes))
    if plan:
        lines.append("Plan:")
        lines.extend(plan)
    else:
        lines.append("Plan: (none)")
    return "\n".join(lines)


def build_agent_prompt(ctx: PolicyContext, system_text: str) -> list[ChatMessage]:
    """System, then the task intro, then strict user/assistant alternation
    of past observations and steps."""
    system = system_text if not ctx.system_suffix else f"{system_text}\n\n{ctx.system_suffix}"
    messages = [ChatMessage("system", system), ChatMessage("user", ctx.intro)]
    for thought, action_raw, observation in ctx.history:
        messages.append(ChatMessage("assistant", render_step(thought, action_raw)))
        messages.append(ChatMessage("user", render_observation(observation)))
    return messages


def render_trace(trajectory: Trajectory) -> str:
    """A whole episode as plain text, for critique prompts."""
    parts = [trajectory.intro or f"Question: {trajectory.question}"]
    for step in trajectory.steps:
        parts.append(render_step(step.thought, step.action_raw))
        parts.append(render_observation(step.observation))
    if trajectory.final_answers:
        parts.append("Final answers: " + ", ".join(trajectory.final_answers))
    return "\n".join(parts)


def parse_react(text: str) -> tuple[str, str]:
    """Split a generation into (thought, action_raw).

    The thought is the text between the last ``Thought:`` marker and the
    following ``Action:``; the action_raw is the remainder of that line.
    Missing markers yield empty strings.
    """
    t_idx = text.rfind("Thought:")
    scope = text[t_idx + len("Thought:"):] if t_idx != -1 else text
    a_idx = scope.find("Action:")
    if a_idx == -1:
        thought = scope.strip() if t_idx != -1 else ""
        return thought, ""
    thought = scope[:a_idx].strip() if t_idx != -1 else ""
    action_line = scope[a_idx + len("Action:"):].split("\n", 1)[0]
    return thought, action_line.strip()


class Policy(Protocol):
    def generate(self, messages: Sequence[ChatMessage], tag: str = TAG_AGENT) -> str: ...


# ----------------------------------------------------------------------
# HTTP chat backend
# ----------------------------------------------------------------------


@dataclass
class HttpPolicyConfig:
    endpoint: str
    model: str
    auth_env_var: str = ""
    temperature: float = 0.1
    top_p: float = 0.9
    max_tokens: int = 512
    top_k: int | None = None
    forward_top_k: bool = False
    max_attempts: int = 3
    backoff_seconds: float = 0.5
    timeout_seconds: float = 60.0

    @classmethod
    def from_file(cls, path) -> "HttpPolicyConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))


class HttpPolicy:
    """Generic chat-completion client: POST the message list, read back
    ``choices[0].message.content``. Retries transient failures with
    exponential backoff before giving up."""

    def __init__(self, config: HttpPolicyConfig):
        self.config = config
        if config.top_k is not None and not config.forward_top_k:
            logger.info("top_k=%s configured but not forwarded (backend support unknown)", config.top_k)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env_var:
            token = os.environ.get(self.config.auth_env_var, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def generate(self, messages: Sequence[ChatMessage], tag: str = TAG_AGENT) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
            "max_tokens": self.config.max_tokens,
        }
        if self.config.top_k is not None and self.config.forward_top_k:
            payload["top_k"] = self.config.top_k
        last_error: Exception | None = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                time.sleep(self.config.backoff_seconds * 2 ** (attempt - 1))
            try:
                response = requests.post(
                    self.config.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout_seconds,
                )
                if response.status_code >= 500:
                    last_error = RuntimeError(f"server error {response.status_code}")
                    continue
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
        raise PolicyUnavailableError(
            f"policy backend failed after {self.config.max_attempts} attempts: {last_error}"
        )


# ----------------------------------------------------------------------
# deterministic test doubles
# ----------------------------------------------------------------------


class ScriptedPolicy:
    """Pops queued outputs in order regardless of the prompt; exhaustion
    is a policy-unavailable error."""

    def __init__(self, outputs: Sequence[str]):
        self._outputs = list(outputs)
        self._lock = threading.Lock()

    def generate(self, messages: Sequence[ChatMessage], tag: str = TAG_AGENT) -> str:
        with self._lock:
            if not self._outputs:
                raise PolicyUnavailableError("scripted policy exhausted")
            return self._outputs.pop(0)


class QuestionScriptedPolicy:
    """Per-question output lists, keyed by the question text parsed from
    the task intro and indexed by the number of assistant turns already
    in the prompt. Stateless per call, so episodes can be re-run and run
    concurrently with identical results. Non-agent calls get empty text."""

    def __init__(self, scripts: dict[str, Sequence[str]], fallback: str = REPLAY_FALLBACK):
        self._scripts = {q: list(outputs) for q, outputs in scripts.items()}
        self._fallback = fallback

    def generate(self, messages: Sequence[ChatMessage], tag: str = TAG_AGENT) -> str:
        if tag != TAG_AGENT:
            return ""
        question = extract_question(messages)
        outputs = self._scripts.get(question)
        if outputs is None:
            return self._fallback
        step_index = sum(1 for m in messages if m.role == "assistant")
        if step_index >= len(outputs):
            return self._fallback
        return outputs[step_index]


class ReplayPolicy:
    """Re-emits a stored trajectory's steps. The step index is derived
    from the number of assistant turns already in the prompt, so calls
    are stateless and safe under concurrency. Planner calls replay the
    stored plan; unseen questions immediately finish(unknown)."""

    def __init__(self, store: dict[str, Trajectory], fallback: str = REPLAY_FALLBACK):
        self._store = dict(store)
        self._fallback = fallback

    def generate(self, messages: Sequence[ChatMessage], tag: str = TAG_AGENT) -> str:
        question = extract_question(messages)
        trajectory = self._store.get(question)
        if trajectory is None:
            return self._fallback if tag == TAG_AGENT else ""
        if tag == TAG_PLANNER:
            return "\n".join(trajectory.plan)
        if tag != TAG_AGENT:
            return ""
        step_index = sum(1 for m in messages if m.role == "assistant")
        if step_index >= len(trajectory.steps):
            return self._fallback
        step = trajectory.steps[step_index]
        return render_step(step.thought, step.action_raw)


def scripted_policy(outputs: Sequence[str]) -> ScriptedPolicy:
    return ScriptedPolicy(outputs)


def replay_policy(store: dict[str, Trajectory]) -> ReplayPolicy:
    return ReplayPolicy(store)


def extract_question(messages: Sequence[ChatMessage]) -> str:
    """Recover the question text from the first user message. The last
    ``Question:`` line wins: planner prompts list demonstration questions
    before the one actually being asked."""
    for message in messages:
        if message.role == "user":
            matches = _QUESTION_LINE_RE.findall(message.content)
            if matches:
                return matches[-1]
            break
    return ""
