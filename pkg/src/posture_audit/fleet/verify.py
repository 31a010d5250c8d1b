"""Compare scan reports against scenario ground truth."""
from __future__ import annotations

from ..versions import ALL_VERSIONS
from .scenarios import ScenarioExpectation


def report_mismatches(report, expected: ScenarioExpectation) -> list[str]:
    """Human-readable differences between one report and its scenario expectation."""
    out = []
    if report.matrix is None:
        return ["no protocol matrix"]
    for v in ALL_VERSIONS:
        got = frozenset(report.matrix.accepted(v))
        if got != expected.accepted[v]:
            out.append(f"{v.name}: accepted {sorted(got)} != {sorted(expected.accepted[v])}")
    counts = report.cipher_counts
    if counts is None:
        out.append("no cipher counts")
    else:
        if counts.weak_set != expected.weak:
            out.append(f"weak {sorted(counts.weak_set)} != {sorted(expected.weak)}")
        if counts.insecure_set != expected.insecure:
            out.append(f"insecure {sorted(counts.insecure_set)} != {sorted(expected.insecure)}")
    if expected.issues is not None:
        if report.chain_report is None:
            out.append("no chain report")
        elif report.chain_report.codes != expected.issues:
            got = sorted(c.value for c in report.chain_report.codes)
            out.append(f"issues {got} != {sorted(c.value for c in expected.issues)}")
    fps = {fp.port: fp.cpe for fp, _ in (report.exposure or ())}
    if fps != expected.fingerprints:
        out.append(f"fingerprints {fps} != {expected.fingerprints}")
    if expected.cves is not None and report.cve_ids() != expected.cves:
        out.append(f"cves {sorted(report.cve_ids())} != {sorted(expected.cves)}")
    if expected.compression is not None and report.matrix.compression != expected.compression:
        out.append(f"compression {report.matrix.compression} != {expected.compression}")
    return out
