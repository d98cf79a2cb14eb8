"""Prompt templates: editable text files with ``{{placeholder}}`` slots.

Defaults ship with the package; a template directory given at run time
overrides any subset of them by file name.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

from .errors import TemplateError

_PLACEHOLDER_RE = re.compile(r"\{\{([a-zA-Z0-9_]+)\}\}")

TEMPLATE_NAMES = (
    "agent_system",
    "planner_system",
    "planner",
    "extract_system",
    "extract",
    "refine",
)


def render(template: str, **values: str) -> str:
    """Substitute placeholders; unresolved or unknown slots are errors."""
    wanted = set(_PLACEHOLDER_RE.findall(template))
    missing = wanted - set(values)
    if missing:
        raise TemplateError(f"unresolved placeholders: {sorted(missing)}")
    extra = set(values) - wanted
    if extra:
        raise TemplateError(f"template has no slot for: {sorted(extra)}")
    out = template
    for key, value in values.items():
        out = out.replace("{{" + key + "}}", str(value))
    return out


class TemplateSet:
    """Named templates resolved from an optional override directory."""

    def __init__(self, directory: str | Path | None = None):
        self._texts: dict[str, str] = {}
        defaults = resources.files("kgagent") / "prompts"
        for name in TEMPLATE_NAMES:
            self._texts[name] = (defaults / f"{name}.txt").read_text("utf-8")
        if directory is not None:
            directory = Path(directory)
            for name in TEMPLATE_NAMES:
                override = directory / f"{name}.txt"
                if override.exists():
                    self._texts[name] = override.read_text("utf-8")

    def text(self, name: str) -> str:
        if name not in self._texts:
            raise TemplateError(f"unknown template {name!r}")
        return self._texts[name]

    def render(self, name: str, **values: str) -> str:
        return render(self.text(name), **values)
