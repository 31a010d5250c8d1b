"""Aggregate statistics over per-domain reports."""
from __future__ import annotations

import dataclasses
import enum
from collections import Counter

from ..certs.validate import IssueCode
from ..errors import EmptyInput
from ..versions import ALL_VERSIONS
from .dataset import Income, Region, geoscheme

GRADE_LETTERS = ("A", "B", "C", "D", "E", "F", "T")
SEVERITY_ORDER = ("None", "Low", "Medium", "High", "Critical")


class Grouping(enum.Enum):
    GLOBAL = "Global"
    BY_REGION = "ByRegion"
    BY_SUB_REGION = "BySubRegion"
    BY_INCOME = "ByIncome"

    def key(self, target) -> str:
        if self is Grouping.GLOBAL:
            return "Global"
        if self is Grouping.BY_REGION:
            return target.region.value
        if self is Grouping.BY_SUB_REGION:
            return target.sub_region
        return target.income.value

    def group_order(self) -> list[str]:
        if self is Grouping.GLOBAL:
            return ["Global"]
        if self is Grouping.BY_REGION:
            return [r.value for r in Region]
        if self is Grouping.BY_SUB_REGION:
            return list(geoscheme())
        return [i.value for i in Income]


@dataclasses.dataclass(frozen=True)
class Distribution:
    """Five-number summary using lower interpolation."""
    min: int
    q1: int
    median: int
    q3: int
    max: int
    n: int

    FIELDS = ("min", "q1", "median", "q3", "max", "n")

    def as_row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


def lower_quantile(sorted_values, k: int):
    """The k-th quartile (k = 0..4): element at floor(k*(n-1)/4)."""
    return sorted_values[(k * (len(sorted_values) - 1)) // 4]


def distribution(values) -> Distribution | None:
    values = sorted(values)
    if not values:
        return None
    q = [lower_quantile(values, k) for k in range(5)]
    return Distribution(*q, n=len(values))


@dataclasses.dataclass(frozen=True)
class CveRow:
    id: str
    severity: str
    domains_exposed: int


@dataclasses.dataclass(frozen=True)
class GroupStats:
    n: int
    unreachable: int
    n_tls: int
    n_cert: int
    n_vuln: int
    n_graded: int
    protocol_support_share: dict        # version name -> fraction (None if n_tls == 0)
    share_with_weak: float | None
    share_with_insecure: float | None
    weak_count_distribution: Distribution | None
    insecure_count_distribution: Distribution | None
    chain_issue_share: float | None
    chain_issue_share_by_code: dict     # code -> fraction
    share_untrusted: float | None
    share_exposed: float | None
    vuln_count_distribution: Distribution | None
    grade_share: dict                   # letter -> fraction
    top_cves: tuple                     # CveRow, ranked


@dataclasses.dataclass(frozen=True)
class AggregateStats:
    grouping: Grouping
    groups: dict                        # group name -> GroupStats, canonical order
    top_n: int = 20

    @property
    def total_n(self) -> int:
        return sum(g.n for g in self.groups.values())


def _share(count: int, denominator: int):
    return count / denominator if denominator else None


def rank_top_cves(reports, n: int = 20) -> list[CveRow]:
    """(id, severity, distinct domains exposed), most widespread first, ties by id."""
    if n < 1:
        raise ValueError("n must be >= 1")
    exposed: Counter = Counter()
    severity: dict = {}
    for r in reports:
        for cve in r.cve_ids():
            exposed[cve] += 1
            severity.setdefault(cve, r.cve_severity.get(cve, ""))
    ranked = sorted(exposed.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
    return [CveRow(cve, severity[cve], count) for cve, count in ranked]


def group_stats(reports, top_n: int = 20) -> GroupStats:
    reports = list(reports)
    tls = [r for r in reports if r.reachable and r.matrix is not None]
    counted = [r for r in tls if r.cipher_counts is not None]
    cert = [r for r in reports if r.reachable and r.chain_report is not None]
    vuln = [r for r in reports if r.reachable and r.exposure is not None]
    graded = [r for r in reports if r.reachable and r.grade is not None]

    protocol = {v.name: _share(sum(1 for r in counted if r.matrix.per_version[v].supported),
                             len(counted))
                for v in ALL_VERSIONS}
    issue_codes = [r.chain_report.codes for r in cert]
    by_code = {c.value: _share(sum(1 for codes in issue_codes if c in codes), len(cert))
               for c in IssueCode}
    letters = Counter(r.grade.letter for r in graded)
    return GroupStats(
        n=len(reports),
        unreachable=sum(1 for r in reports if not r.reachable),
        n_tls=len(counted),
        n_cert=len(cert),
        n_vuln=len(vuln),
        n_graded=len(graded),
        protocol_support_share=protocol,
        share_with_weak=_share(sum(1 for r in counted if r.cipher_counts.weak_count >= 1),
                               len(counted)),
        share_with_insecure=_share(sum(1 for r in counted if r.cipher_counts.insecure_count >= 1),
                                   len(counted)),
        weak_count_distribution=distribution(r.cipher_counts.weak_count for r in counted),
        insecure_count_distribution=distribution(r.cipher_counts.insecure_count for r in counted),
        chain_issue_share=_share(sum(1 for codes in issue_codes if codes), len(cert)),
        chain_issue_share_by_code=by_code,
        share_untrusted=_share(sum(1 for r in cert if not r.chain_report.trusted), len(cert)),
        share_exposed=_share(sum(1 for r in vuln if r.cve_ids()), len(vuln)),
        vuln_count_distribution=distribution(len(r.cve_ids()) for r in vuln),
        grade_share={g: _share(letters[g], len(graded)) for g in GRADE_LETTERS},
        top_cves=tuple(rank_top_cves(reports, top_n)),
    )


def aggregate(reports, grouping: Grouping = Grouping.GLOBAL, *, top_n: int = 20) -> AggregateStats:
    reports = list(reports)
    if not reports:
        raise EmptyInput("no reports to aggregate")
    buckets: dict[str, list] = {}
    for r in reports:
        buckets.setdefault(grouping.key(r.target), []).append(r)
    # reports are grouped then re-sorted by domain, so input order cannot matter
    groups = {name: group_stats(sorted(buckets[name], key=lambda r: r.domain), top_n)
              for name in grouping.group_order() if name in buckets}
    return AggregateStats(grouping, groups, top_n)


def aggregate_all(reports, *, top_n: int = 20) -> list[AggregateStats]:
    return [aggregate(reports, g, top_n=top_n) for g in Grouping]
