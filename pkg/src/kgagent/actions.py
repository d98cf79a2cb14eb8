"""The agent's tool-call grammar and its two failure modes.

A step's text carries at most one action, written on a single line:

    Action: name(arg1, arg2, ...)

Arguments may be double-quoted; quotes are stripped and protect embedded
commas. Parse failures come back as values, not exceptions, because they
feed the error taxonomy: IA for an unknown (or non-issuable) tool name,
EA for bad arity or unparsable arguments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

GET_REASONING_PATH = "getReasoningPath"
WIKI_SEARCH = "wikiSearch"
EXTRACT_TRIPLES = "extractTriples"
SEARCH_NEIGHBOR = "searchNeighbor"
FINISH = "finish"

# (min arity, max arity or None); extractTriples is auto-triggered after
# wikiSearch and is never accepted from the policy
ISSUABLE_TOOLS: dict[str, tuple[int, int | None]] = {
    GET_REASONING_PATH: (1, 1),
    WIKI_SEARCH: (2, 2),
    SEARCH_NEIGHBOR: (2, 2),
    FINISH: (1, None),
}

TOOL_SIGNATURES = (
    f"{GET_REASONING_PATH}(sub_question)",
    f"{WIKI_SEARCH}(entity, relation)",
    f"{SEARCH_NEIGHBOR}(entity, relation)",
    f"{FINISH}(answer1, answer2, ...)",
)

INVALID_ACTION = "IA"
ARGUMENT_ERROR = "EA"

_ACTION_LINE_RE = re.compile(r"Action:\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*$")


@dataclass(frozen=True)
class Action:
    name: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class ActionParseFailure:
    kind: str  # INVALID_ACTION or ARGUMENT_ERROR
    detail: str
    name: str = ""
    raw: str = ""


def split_args(blob: str) -> list[str] | None:
    """Split an argument blob on top-level commas; double quotes protect
    embedded commas and are stripped. None means unparsable."""
    if blob.strip() == "":
        return []
    args: list[str] = []
    current: list[str] = []
    in_quotes = False
    for ch in blob:
        if ch == '"':
            in_quotes = not in_quotes
        elif ch == "," and not in_quotes:
            args.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    if in_quotes:
        return None  # unbalanced quote
    args.append("".join(current).strip())
    return args


def parse_action(text: str):
    """Extract and validate the last ``Action: name(args)`` line of a
    generation. Returns an Action or an ActionParseFailure."""
    match = None
    for line in text.splitlines():
        m = _ACTION_LINE_RE.search(line)
        if m is not None:
            match = m
    if match is None:
        return ActionParseFailure(INVALID_ACTION, "no action line found", raw=text.strip())
    name, blob = match.group(1), match.group(2)
    raw = match.group(0).split("Action:", 1)[1].strip()
    if name not in ISSUABLE_TOOLS:
        return ActionParseFailure(INVALID_ACTION, f"unknown tool {name!r}", name=name, raw=raw)
    args = split_args(blob)
    if args is None:
        return ActionParseFailure(ARGUMENT_ERROR, "unbalanced quote in arguments", name=name, raw=raw)
    if any(a == "" for a in args):
        return ActionParseFailure(ARGUMENT_ERROR, "empty argument", name=name, raw=raw)
    lo, hi = ISSUABLE_TOOLS[name]
    if len(args) < lo or (hi is not None and len(args) > hi):
        expected = f"{lo}" if hi == lo else (f">={lo}" if hi is None else f"{lo}..{hi}")
        return ActionParseFailure(
            ARGUMENT_ERROR,
            f"{name} takes {expected} argument(s), got {len(args)}",
            name=name,
            raw=raw,
        )
    return Action(name, tuple(args))
