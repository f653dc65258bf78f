class SceneryError(Exception):
    """Base class for errors raised by this package."""


class DomainError(SceneryError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(SceneryError, RuntimeError):
    """A quadrature or iteration could not meet its tolerance."""


class SynthesisError(SceneryError, RuntimeError):
    """Random-field synthesis failed (e.g. negative discrete spectrum)."""


class UnsupportedBackendError(SceneryError, TypeError):
    """The operation is not defined for the given field backend."""


class BudgetError(SceneryError, RuntimeError):
    """A resource guard (path length, memory budget) was violated."""


class ConfigError(SceneryError, ValueError):
    """An experiment configuration failed validation."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
