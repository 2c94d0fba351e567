"""Exception types shared across the package."""


class DrivePrefError(Exception):
    """Base class for all package errors."""


class ValidationError(DrivePrefError, ValueError):
    """An object violates a documented invariant."""


class TrajectoryRangeError(DrivePrefError, ValueError):
    """A time falls outside a trajectory's sampled range."""


class ParseError(DrivePrefError, ValueError):
    """A file could not be parsed; message carries path (and line when known)."""

    def __init__(self, message: str, path=None, line=None):
        loc = f"{path}" + (f":{line}" if line is not None else "") if path else ""
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class LinkError(DrivePrefError, ValueError):
    """A cross-reference names an unknown object; message names the offender."""


class LookupRuleError(DrivePrefError, KeyError):
    """A rule id is not part of a rulebook."""


class GenerationError(DrivePrefError, RuntimeError):
    """A scenario template cannot realize the requested plant."""


class CapabilityError(DrivePrefError, TypeError):
    """A model kind does not support the requested operation."""


class DegenerateComponentError(DrivePrefError, RuntimeError):
    """A comparison-graph component has no finite maximum-likelihood strengths."""
