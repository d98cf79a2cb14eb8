"""Exception hierarchy shared across the package."""


class KgAgentError(Exception):
    """Base class for all package errors."""


class KgParseError(KgAgentError):
    """A KG file line could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyGraphError(KgAgentError):
    """A KG file contained no triples."""


class EntityNotFoundError(KgAgentError):
    """An entity label is not interned in the graph."""


class TripleNotFoundError(KgAgentError):
    """Attempt to remove a triple that is not in the graph."""


class TemplateError(KgAgentError):
    """A prompt template is missing a required placeholder or has unresolved ones."""


class PolicyUnavailableError(KgAgentError):
    """The policy backend could not produce a completion (transport exhausted,
    scripted outputs exhausted)."""


class EnvContractError(KgAgentError):
    """Environment misuse, e.g. stepping a finished episode."""


class EmptyDatasetError(KgAgentError):
    """A training-data emission was requested for an empty survivor set."""


class ConfigError(KgAgentError):
    """Run configuration failed validation."""
