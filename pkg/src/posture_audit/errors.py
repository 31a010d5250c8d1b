"""Exception hierarchy shared across the toolkit."""
from __future__ import annotations


class PostureError(Exception):
    """Base class for every error raised by posture_audit."""


class SchemaError(PostureError):
    """An input file does not follow its declared schema."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class InvariantViolation(PostureError):
    pass


class ConfigError(PostureError):
    pass


class EmptyInput(PostureError):
    pass


# --- prober -----------------------------------------------------------------

class UnsupportedCombination(PostureError):
    """A ClientHello was requested with ciphers the version cannot carry."""


class ProtocolViolation(PostureError):
    pass


class Unreachable(PostureError):
    pass


class BudgetExceeded(PostureError):
    """A probe would exceed the per-host or per-version connection budget."""


class NoChainPresented(PostureError):
    pass


class HandshakeFailure(PostureError):
    pass


# --- catalog ----------------------------------------------------------------

class UnknownCipher(PostureError):
    def __init__(self, code_points):
        self.code_points = tuple(sorted(code_points))
        super().__init__("unknown cipher code points: "
                         + ", ".join(f"0x{c:04X}" for c in self.code_points))


# --- certificates -----------------------------------------------------------

class DerSyntaxError(PostureError):
    """A certificate blob failed to parse; ``records`` holds the parsed prefix."""

    def __init__(self, position: int, records=(), reason: str = ""):
        self.position = position
        self.records = list(records)
        super().__init__(f"certificate {position} is not valid DER: {reason}")


class EmptyChain(PostureError):
    pass


class UnsatisfiableSpec(PostureError):
    pass


# --- vulnerabilities --------------------------------------------------------

class BandMismatch(SchemaError):
    pass


class OutOfRange(PostureError):
    pass


class MalformedVersion(PostureError):
    pass


# --- aggregation / orchestration ------------------------------------------

class DuplicateDomain(SchemaError):
    pass


class RegionMismatch(SchemaError):
    pass


class UnknownRun(PostureError):
    pass


class ScenarioInvalid(PostureError):
    pass


class PortExhaustion(PostureError):
    pass
