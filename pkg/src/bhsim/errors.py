from typing import Any, List, Mapping, Optional, Sequence

from ._compat import ExceptionGroup


class BhsimError(Exception):
    """Base class for every error raised by bhsim itself."""


class BookkeepingError(BhsimError):
    """
    A trust table was asked to do something that indicates a protocol bug:
    updating an unknown node, updating a node that was already declared
    malicious, or registering a node twice.

    :attr:`node_id` is the offending node.
    """

    def __init__(self, message: str, node_id: str) -> None:
        super().__init__(message)
        self.node_id = node_id


class NoEligibleHeadError(BhsimError):
    """Raised when an election finds no live, undetected candidate."""

    def __init__(self, message: str, excluded: Sequence[str] = ()) -> None:
        super().__init__(message)
        self.excluded = tuple(excluded)


class ConfigViolation(ValueError):
    """A single violated configuration constraint, located by a `$.path`."""

    def __init__(self, message: str, path: str = "$") -> None:
        super().__init__(message)
        self.path = path

    def __str__(self) -> str:
        return f"{self.args[0]} @ {self.path}"


class ConfigValidationError(ExceptionGroup):
    """
    Raised when a scenario configuration is invalid.

    Like cattrs' validation errors this is an exception group: every violated
    constraint is one sub-exception. :attr:`errors` holds the formatted
    messages in a stable order.
    """

    errors: List[str]

    def __new__(cls, message: str, excs: Sequence[Exception]):
        obj = super().__new__(cls, message, list(excs))
        obj.errors = [str(e) for e in excs]
        return obj

    def derive(self, excs):
        return ConfigValidationError(self.message, excs)

    @classmethod
    def from_messages(
        cls, messages: Sequence[str], message: str = "invalid scenario configuration"
    ) -> "ConfigValidationError":
        """Build the group from already formatted `"<what> @ <path>"` strings."""
        excs = []
        for m in messages:
            what, _, path = m.rpartition(" @ ")
            excs.append(ConfigViolation(what, path) if what else ConfigViolation(m))
        return cls(message, excs)


class LogParseError(BhsimError):
    """An event log line could not be parsed; :attr:`line_number` is 1-based."""

    def __init__(self, message: str, line_number: int) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SweepRunError(BhsimError):
    """
    A single run of a parameter sweep failed. The sweep is aborted and the
    failing run's configuration is kept in :attr:`config` for echoing.
    """

    def __init__(
        self, message: str, config: Mapping[str, Any], cause: Optional[BaseException]
    ) -> None:
        super().__init__(message)
        self.config = config
        self.cause = cause
