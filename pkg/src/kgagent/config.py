"""Run configuration: a JSON file of defaults, overridden by CLI flags.

Validation happens before any side effect; bad values or missing paths
fail fast with the offending key named.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    # paths
    kg: str = ""
    questions: str = ""
    train_questions: str = ""
    validation_questions: str = ""
    corpus: str = ""
    templates: str = ""
    out_dir: str = "out"
    # seeds and hyperparameters
    seed: int = 0
    max_len: int = 4
    k: int = 3
    m: int = 5
    max_steps: int = 10
    removal_ratio: float = 0.5
    epsilon_points: float = 0.5
    iterations: int = 2
    concurrency: int = 1
    list_limit: int = 30
    top_docs: int = 3
    plan_first: bool = False
    # policy backend
    policy: str = "scripted"  # scripted | replay | http
    script: str = ""
    replay_store: str = ""
    policy_config: str = ""

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict | None = None) -> "RunConfig":
        values: dict = {}
        if path:
            with open(path, "r", encoding="utf-8") as fh:
                values.update(json.load(fh))
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def validate(self, require: tuple[str, ...] = ()) -> None:
        if not 0 < self.removal_ratio <= 1:
            raise ConfigError("removal_ratio must be in (0, 1]")
        for key in ("max_len", "k", "m", "max_steps", "iterations", "concurrency",
                    "list_limit", "top_docs"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.epsilon_points < 0:
            raise ConfigError("epsilon_points must be >= 0")
        if self.policy not in ("scripted", "replay", "http"):
            raise ConfigError(f"unknown policy backend: {self.policy!r}")
        for key in require:
            value = getattr(self, key)
            if not value:
                raise ConfigError(f"{key} is required")
            if key in ("kg", "questions", "train_questions", "validation_questions",
                       "corpus", "templates", "script", "replay_store", "policy_config"):
                if not Path(value).exists():
                    raise ConfigError(f"{key}: no such path: {value}")
        # optional paths still must exist when set
        for key in ("corpus", "templates", "train_questions", "validation_questions"):
            value = getattr(self, key)
            if value and not Path(value).exists():
                raise ConfigError(f"{key}: no such path: {value}")
