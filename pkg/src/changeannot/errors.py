"""Exception types shared across the package."""


class ChangeAnnotError(Exception):
    """Base class for all package errors."""


class ArgumentError(ChangeAnnotError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(ArgumentError):
    """Experiment configuration failed validation."""


class DataError(ChangeAnnotError, ValueError):
    """Input data is malformed or degenerate."""


class VocabularyError(ChangeAnnotError, KeyError):
    """A word has no vector in an embedding table."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class TrainingError(ChangeAnnotError, RuntimeError):
    """Training diverged or could not proceed."""
