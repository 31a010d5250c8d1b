"""Per-domain posture report: the three assessment dimensions for one target."""
from __future__ import annotations

import dataclasses
import datetime as dt
import enum

from ..catalog import CipherCounts
from ..certs.validate import ChainReport
from ..grading import ServerGrade
from ..prober.probe import ProtocolSupportMatrix
from ..vulns.fingerprint import ServiceFingerprint
from .dataset import ScanTarget


class ScanStatus(enum.Enum):
    COMPLETE = "Complete"
    PARTIAL = "Partial"
    UNREACHABLE = "Unreachable"
    SKIPPED = "Skipped"


@dataclasses.dataclass(frozen=True)
class DomainPostureReport:
    target: ScanTarget
    status: ScanStatus
    matrix: ProtocolSupportMatrix | None = None
    cipher_counts: CipherCounts | None = None
    chain_report: ChainReport | None = None
    exposure: tuple | None = None          # ((ServiceFingerprint, (cve ids...)), ...)
    cve_severity: dict = dataclasses.field(default_factory=dict)   # id -> Severity value
    grade: ServerGrade | None = None
    scanned_at: dt.datetime | None = None
    errors: dict = dataclasses.field(default_factory=dict)         # dimension -> message

    @property
    def domain(self) -> str:
        return self.target.domain

    @property
    def reachable(self) -> bool:
        return self.status not in (ScanStatus.UNREACHABLE, ScanStatus.SKIPPED)

    def cve_ids(self) -> frozenset:
        if not self.exposure:
            return frozenset()
        return frozenset(c for _, ids in self.exposure for c in ids)

    def to_dict(self) -> dict:
        counts = None
        if self.cipher_counts is not None:
            c = self.cipher_counts
            counts = {"weak_count": c.weak_count, "insecure_count": c.insecure_count,
                      "weak_set": [f"0x{x:04X}" for x in sorted(c.weak_set)],
                      "insecure_set": [f"0x{x:04X}" for x in sorted(c.insecure_set)],
                      "unknown": [f"0x{x:04X}" for x in sorted(c.unknown)]}
        exposure = None
        if self.exposure is not None:
            exposure = [{"fingerprint": fp.to_dict(), "cves": list(ids)}
                        for fp, ids in self.exposure]
        return {
            "target": self.target.to_dict(),
            "status": self.status.value,
            "matrix": self.matrix.to_dict() if self.matrix is not None else None,
            "cipher_counts": counts,
            "chain_report": self.chain_report.to_dict() if self.chain_report is not None else None,
            "exposure": exposure,
            "cve_severity": dict(sorted(self.cve_severity.items())),
            "grade": self.grade.to_dict() if self.grade is not None else None,
            "scanned_at": self.scanned_at.isoformat() if self.scanned_at else None,
            "errors": dict(self.errors),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainPostureReport":
        counts = None
        if d.get("cipher_counts") is not None:
            c = d["cipher_counts"]
            hexset = lambda key: frozenset(int(x, 16) for x in c.get(key, ()))  # noqa: E731
            counts = CipherCounts(c["weak_count"], c["insecure_count"], hexset("weak_set"),
                                  hexset("insecure_set"), hexset("unknown"))
        exposure = None
        if d.get("exposure") is not None:
            exposure = tuple((ServiceFingerprint.from_dict(e["fingerprint"]), tuple(e["cves"]))
                             for e in d["exposure"])
        return cls(
            target=ScanTarget.from_dict(d["target"]),
            status=ScanStatus(d["status"]),
            matrix=ProtocolSupportMatrix.from_dict(d["matrix"]) if d.get("matrix") else None,
            cipher_counts=counts,
            chain_report=ChainReport.from_dict(d["chain_report"]) if d.get("chain_report") else None,
            exposure=exposure,
            cve_severity=dict(d.get("cve_severity") or {}),
            grade=ServerGrade.from_dict(d["grade"]) if d.get("grade") else None,
            scanned_at=dt.datetime.fromisoformat(d["scanned_at"]) if d.get("scanned_at") else None,
            errors=dict(d.get("errors") or {}),
        )
