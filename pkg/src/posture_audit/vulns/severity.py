"""CVSS v3 qualitative severity bands."""
from __future__ import annotations

import enum
import math

from ..errors import OutOfRange


class Severity(enum.Enum):
    NONE = "None"
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    CRITICAL = "Critical"

    @property
    def rank(self) -> int:
        return _ORDER.index(self)

    def __lt__(self, other):
        if not isinstance(other, Severity):
            return NotImplemented
        return self.rank < other.rank

    @classmethod
    def parse(cls, text: str) -> "Severity":
        for member in cls:
            if member.value.lower() == str(text).strip().lower():
                return member
        raise ValueError(f"unknown severity {text!r}")


_ORDER = (Severity.NONE, Severity.LOW, Severity.MEDIUM, Severity.HIGH, Severity.CRITICAL)


def severity_band(score) -> Severity:
    score = float(score)
    if math.isnan(score) or not 0.0 <= score <= 10.0:
        raise OutOfRange(f"CVSS base score {score} outside 0.0-10.0")
    if score == 0.0:
        return Severity.NONE
    if score < 4.0:
        return Severity.LOW
    if score < 7.0:
        return Severity.MEDIUM
    if score < 9.0:
        return Severity.HIGH
    return Severity.CRITICAL
