"""Exception hierarchy shared by every layer of the toolkit.

Each error also derives from the builtin it specializes, so callers that only
know about ``ValueError`` or ``RuntimeError`` keep working. The CLI maps any
``ObxError`` to exit code 2.
"""


class ObxError(Exception):
    """Base class for all toolkit errors."""


class SchemeError(ObxError, ValueError):
    pass


class PoleError(ObxError, ZeroDivisionError):
    pass


class NetlistParseError(ObxError, ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        prefix = f"{source}: " if source else ""
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(prefix + message)


class StampError(ObxError, ValueError):
    pass


class SingularPencilError(ObxError, ValueError):
    pass


class IllConditionedSplitError(ObxError, RuntimeError):
    pass


class ResonanceError(ObxError, ValueError):
    pass


class SingularStepError(ObxError, RuntimeError):
    def __init__(self, h: float, l: int, m: int, detail: str = ""):
        self.h = h
        self.l = l
        self.m = m
        message = f"augmented step matrix is singular (h={h:g}, l={l}, m={m})"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class InsufficientHistoryError(ObxError, ValueError):
    pass


class TooFewSamplesError(ObxError, ValueError):
    pass


class ConfigError(ObxError, ValueError):
    pass
