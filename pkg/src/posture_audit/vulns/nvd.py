"""Offline NVD snapshot: records, index and CPE range matching."""
from __future__ import annotations

import dataclasses
import datetime as dt
import json
import logging
import re
from collections.abc import Iterable
from pathlib import Path

from ..errors import BandMismatch, MalformedVersion, SchemaError
from . import cpe as cpelib
from .severity import Severity, severity_band
from .versioning import compare_versions, is_valid_version

log = logging.getLogger(__name__)

CVE_ID = re.compile(r"^CVE-\d{4}-\d{4,}$")
BOUND_KEYS = ("ver_start_incl", "ver_start_excl", "ver_end_incl", "ver_end_excl")
_ANY = ("*", "-", "")


@dataclasses.dataclass(frozen=True)
class MatchCriterion:
    cpe_prefix: str
    ver_start_incl: str | None = None
    ver_start_excl: str | None = None
    ver_end_incl: str | None = None
    ver_end_excl: str | None = None

    def __post_init__(self):
        parts = cpelib.parse_prefix(self.cpe_prefix)
        if parts[3] in _ANY or parts[4] in _ANY:
            raise SchemaError(f"CPE prefix {self.cpe_prefix!r} must name vendor and product")
        if self.ver_start_incl and self.ver_start_excl:
            raise SchemaError("both inclusive and exclusive start bounds")
        if self.ver_end_incl and self.ver_end_excl:
            raise SchemaError("both inclusive and exclusive end bounds")
        for key in BOUND_KEYS:
            value = getattr(self, key)
            if value is not None and not is_valid_version(value):
                raise SchemaError(f"{key} {value!r} is not a dotted version")
        start, end = self.start, self.end
        if start and end:
            order = compare_versions(start, end)
            if order > 0 or (order == 0 and not (self.ver_start_incl and self.ver_end_incl)):
                raise SchemaError(f"empty version range {start}..{end}")

    @property
    def start(self):
        return self.ver_start_incl or self.ver_start_excl

    @property
    def end(self):
        return self.ver_end_incl or self.ver_end_excl

    @property
    def has_range(self) -> bool:
        return any(getattr(self, k) for k in BOUND_KEYS)

    @property
    def components(self) -> list[str]:
        return cpelib.parse_prefix(self.cpe_prefix)

    @property
    def key(self) -> tuple[str, str]:
        c = self.components
        return c[3], c[4]

    def in_range(self, version: str) -> bool:
        """Range predicate; raises MalformedVersion for unparseable input."""
        if self.ver_start_incl and compare_versions(version, self.ver_start_incl) < 0:
            return False
        if self.ver_start_excl and compare_versions(version, self.ver_start_excl) <= 0:
            return False
        if self.ver_end_incl and compare_versions(version, self.ver_end_incl) > 0:
            return False
        if self.ver_end_excl and compare_versions(version, self.ver_end_excl) >= 0:
            return False
        return True

    def covers(self, cpe: str, version: str) -> bool:
        target = cpelib.split_cpe(cpe)
        mine = self.components
        for i, want in enumerate(mine):
            if i == 5 or i < 2 or want in _ANY:
                continue
            if target[i] != want:
                return False
        pinned = mine[5] not in _ANY
        if pinned:
            pinned_version = cpelib.unescape(mine[5])
            try:
                if compare_versions(version, pinned_version) != 0:
                    return False
            except MalformedVersion:
                if version != pinned_version:
                    return False
        if self.has_range:
            return self.in_range(version)
        return True

    def to_dict(self) -> dict:
        out = {"cpe_prefix": self.cpe_prefix}
        out.update({k: getattr(self, k) for k in BOUND_KEYS if getattr(self, k)})
        return out


@dataclasses.dataclass(frozen=True)
class CveRecord:
    id: str
    base_score: float
    severity: Severity
    match_criteria: tuple
    published: dt.date | None = None

    def __post_init__(self):
        if not CVE_ID.match(self.id):
            raise SchemaError(f"bad CVE id {self.id!r}")
        if severity_band(self.base_score) is not self.severity:
            raise BandMismatch(f"{self.id}: score {self.base_score} is "
                               f"{severity_band(self.base_score).value}, labelled {self.severity.value}")

    def to_dict(self) -> dict:
        return {"id": self.id, "base_score": self.base_score, "severity": self.severity.value,
                "published": self.published.isoformat() if self.published else None,
                "matches": [m.to_dict() for m in self.match_criteria]}


def record_from_dict(obj: dict, line: int | None = None) -> CveRecord:
    try:
        matches = tuple(MatchCriterion(m["cpe_prefix"], *(m.get(k) for k in BOUND_KEYS))
                        for m in obj["matches"])
        published = obj.get("published")
        return CveRecord(
            id=obj["id"],
            base_score=float(obj["base_score"]),
            severity=Severity.parse(obj["severity"]),
            match_criteria=matches,
            published=dt.date.fromisoformat(published) if published else None,
        )
    except BandMismatch as exc:
        raise BandMismatch(str(exc), row=line) from None
    except SchemaError as exc:
        if exc.row is None and line is not None:
            raise SchemaError(str(exc), row=line) from None
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed record: {exc!r}", row=line) from exc


class NvdIndex:
    """CVE records keyed by CPE vendor:product."""

    def __init__(self, records: Iterable[CveRecord] = ()):
        self.records: dict[str, CveRecord] = {}
        self._by_product: dict[tuple, list] = {}
        for rec in records:
            if rec.id in self.records:
                raise SchemaError(f"duplicate CVE {rec.id}")
            self.records[rec.id] = rec
            for key in {m.key for m in rec.match_criteria}:
                self._by_product.setdefault(key, []).append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, cve_id) -> bool:
        return cve_id in self.records

    def __getitem__(self, cve_id) -> CveRecord:
        return self.records[cve_id]

    def candidates(self, vendor: str, product: str) -> list[CveRecord]:
        return self._by_product.get((vendor, product), [])


def _snapshot_files(paths) -> list[Path]:
    if isinstance(paths, (str, Path)):
        paths = [paths]
    files: list[Path] = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.jsonl")) if p.is_dir() else [p])
    return files


def load_nvd_snapshot(paths) -> NvdIndex:
    records = []
    for path in _snapshot_files(paths):
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"{path.name}: invalid JSON ({exc.msg})", row=line_no) from exc
                records.append(record_from_dict(obj, line_no))
    return NvdIndex(records)


def write_snapshot(records: Iterable[CveRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def lookup_cves(fp, index: NvdIndex, notes: list | None = None) -> list[str]:
    """IDs of the records covering ``fp``'s CPE and version, sorted.

    A version that cannot be compared numerically only matches criteria
    that pin that exact version string; this is noted in ``notes``.
    """
    parts = cpelib.split_cpe(fp.cpe)
    vendor, product = parts[3], parts[4]
    version = fp.version
    malformed = not is_valid_version(version)
    if malformed:
        msg = f"version {version!r} not comparable; exact-string matching only"
        log.info("%s", msg)
        if notes is not None:
            notes.append(msg)
    hits = set()
    for rec in index.candidates(vendor, product):
        for crit in rec.match_criteria:
            if malformed and crit.has_range:
                continue
            if crit.covers(fp.cpe, version):
                hits.add(rec.id)
                break
    return sorted(hits)


@dataclasses.dataclass
class ExposureReport:
    per_domain: dict                 # domain -> list of (ServiceFingerprint, [cve ids])
    total_distinct_cves: int
    severity_histogram: dict         # Severity.value -> distinct count

    def distinct_ids(self) -> set:
        return {c for entries in self.per_domain.values() for _, ids in entries for c in ids}

    def domain_cves(self, domain: str) -> set:
        return {c for _, ids in self.per_domain.get(domain, []) for c in ids}


def build_exposure_report(fingerprints: dict, index: NvdIndex) -> ExposureReport:
    per_domain = {}
    distinct: set[str] = set()
    for domain, fps in fingerprints.items():
        entries = []
        for fp in fps:
            ids = lookup_cves(fp, index)
            entries.append((fp, ids))
            distinct.update(ids)
        per_domain[domain] = entries
    histogram = {s.value: 0 for s in Severity}
    for cve in distinct:
        histogram[index[cve].severity.value] += 1
    return ExposureReport(per_domain, len(distinct), histogram)
