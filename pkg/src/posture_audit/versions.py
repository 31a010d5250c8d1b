"""Protocol versions probed by the scanner."""
from __future__ import annotations

import enum


class ProtocolVersion(enum.Enum):
    SSL2 = 0x0002
    SSL3 = 0x0300
    TLS1_0 = 0x0301
    TLS1_1 = 0x0302
    TLS1_2 = 0x0303
    TLS1_3 = 0x0304

    @property
    def wire_code(self) -> int:
        return self.value

    @property
    def deprecated(self) -> bool:
        return self in _DEPRECATED

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def from_wire(cls, code: int) -> "ProtocolVersion":
        return cls(code)

    def __lt__(self, other: "ProtocolVersion") -> bool:
        if not isinstance(other, ProtocolVersion):
            return NotImplemented
        return _ORDER[self] < _ORDER[other]


ALL_VERSIONS = tuple(ProtocolVersion)
_ORDER = {v: i for i, v in enumerate(ALL_VERSIONS)}
_DEPRECATED = frozenset({ProtocolVersion.SSL2, ProtocolVersion.SSL3,
                         ProtocolVersion.TLS1_0, ProtocolVersion.TLS1_1})
_LABELS = {
    ProtocolVersion.SSL2: "SSLv2",
    ProtocolVersion.SSL3: "SSLv3",
    ProtocolVersion.TLS1_0: "TLSv1.0",
    ProtocolVersion.TLS1_1: "TLSv1.1",
    ProtocolVersion.TLS1_2: "TLSv1.2",
    ProtocolVersion.TLS1_3: "TLSv1.3",
}
