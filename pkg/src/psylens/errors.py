"""Shared exception hierarchy.

The CLI maps these onto exit codes: validation/config problems exit 1,
degraded runs exit 2, backend failures exit 3.
"""

from __future__ import annotations


class PsylensError(Exception):
    """Base class for all package errors."""


class ParseError(PsylensError):
    """A file could not be parsed at all (bad JSON, wrong schema, missing field)."""


class ValidationError(PsylensError):
    """Well-formed input that violates a documented invariant."""

    def __init__(self, message: str, offenses: list[str] | None = None) -> None:
        self.offenses = list(offenses or [])
        if self.offenses:
            message = message + "\n  - " + "\n  - ".join(self.offenses)
        super().__init__(message)


class ConfigError(PsylensError):
    """Invalid run configuration or command arguments."""


class TemplateError(PsylensError):
    """Prompt template failure: unknown template or unresolved placeholder."""


class BackendError(PsylensError):
    """LLM backend failure (auth, transport, malformed provider response)."""


class ReplayMissError(BackendError):
    """Replay store has no recording for the requested fingerprint."""

    def __init__(self, fingerprint: str) -> None:
        self.fingerprint = fingerprint
        super().__init__(
            f"replay fixture missing for fingerprint {fingerprint}; "
            "re-record the store or fix the request"
        )


class RetryBudgetExceededError(BackendError):
    """Transient failures persisted past the configured retry budget."""


class JudgeError(PsylensError):
    """The G-Eval judge produced no parseable sample."""
