"""Write aggregate statistics and per-domain reports to disk, and read them back."""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

from ..errors import EmptyInput
from .stats import AggregateStats, CveRow, Distribution, GroupStats, Grouping

SUMMARY_FILE = "agg_groups.csv"
PLOT_FILES = ("fig_protocols.csv", "fig_cipher_dist.csv", "fig_chain_issues.csv",
              "fig_vuln_dist.csv", "table_top_cves.csv")
GRADES_FILE = "fig_grades.csv"
REPORTS_FILE = "reports.jsonl"

SUMMARY_COLUMNS = ["grouping", "group", "n", "unreachable", "n_tls", "n_cert", "n_vuln",
                   "n_graded", "share_with_weak", "share_with_insecure", "chain_issue_share",
                   "share_untrusted", "share_exposed", "top_n"]
DIST_COLUMNS = list(Distribution.FIELDS)


def _num(value) -> str:
    return "" if value is None else repr(value)


def _float(text: str):
    return None if text == "" else float(text)


def _dist_row(d: Distribution | None) -> list:
    return d.as_row() if d is not None else [""] * len(DIST_COLUMNS)


def _dist_parse(row: dict) -> Distribution | None:
    if row["n"] == "":
        return None
    return Distribution(*(int(row[f]) for f in DIST_COLUMNS))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def emit_reports(stats: list[AggregateStats] | AggregateStats, reports, out_dir) -> list[Path]:
    """Write every file into ``out_dir`` atomically; nothing is written on error."""
    if isinstance(stats, AggregateStats):
        stats = [stats]
    reports = list(reports)
    if not reports or not stats:
        raise EmptyInput("nothing to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".emit-", dir=out_dir))
    try:
        _emit_into(staging, stats, reports)
        written = []
        for src in sorted(staging.iterdir()):
            dst = out_dir / src.name
            os.replace(src, dst)
            written.append(dst)
    finally:
        for leftover in staging.iterdir():
            leftover.unlink()
        staging.rmdir()
    return written


def _emit_into(d: Path, stats, reports) -> None:
    with open(d / REPORTS_FILE, "w", encoding="utf-8") as fh:
        for r in sorted(reports, key=lambda r: r.domain):
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    summary, protocols, ciphers, chain, vulns, top, grades = ([] for _ in range(7))
    for agg in stats:
        gname = agg.grouping.value
        for name, g in agg.groups.items():
            summary.append([gname, name, g.n, g.unreachable, g.n_tls, g.n_cert, g.n_vuln,
                            g.n_graded, _num(g.share_with_weak), _num(g.share_with_insecure),
                            _num(g.chain_issue_share), _num(g.share_untrusted),
                            _num(g.share_exposed), agg.top_n])
            for version, share in g.protocol_support_share.items():
                protocols.append([gname, name, version, _num(share)])
            ciphers.append([gname, name, "weak"] + _dist_row(g.weak_count_distribution))
            ciphers.append([gname, name, "insecure"] + _dist_row(g.insecure_count_distribution))
            for code, share in g.chain_issue_share_by_code.items():
                chain.append([gname, name, code, _num(share)])
            vulns.append([gname, name] + _dist_row(g.vuln_count_distribution))
            for rank, row in enumerate(g.top_cves, start=1):
                top.append([gname, name, rank, row.id, row.severity, row.domains_exposed])
            for letter, share in g.grade_share.items():
                grades.append([gname, name, letter, _num(share)])
    _write_csv(d / SUMMARY_FILE, SUMMARY_COLUMNS, summary)
    _write_csv(d / "fig_protocols.csv", ["grouping", "group", "version", "share"], protocols)
    _write_csv(d / "fig_cipher_dist.csv", ["grouping", "group", "kind"] + DIST_COLUMNS, ciphers)
    _write_csv(d / "fig_chain_issues.csv", ["grouping", "group", "code", "share"], chain)
    _write_csv(d / "fig_vuln_dist.csv", ["grouping", "group"] + DIST_COLUMNS, vulns)
    _write_csv(d / "table_top_cves.csv",
               ["grouping", "group", "rank", "id", "severity", "domains_exposed"], top)
    _write_csv(d / GRADES_FILE, ["grouping", "group", "letter", "share"], grades)


def _rows(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        yield from csv.DictReader(fh)


def load_emitted(out_dir) -> list[AggregateStats]:
    """Rebuild the AggregateStats written by :func:`emit_reports`."""
    d = Path(out_dir)
    keyed: dict = {}

    def bucket(row, field, default):
        return keyed[(row["grouping"], row["group"])].setdefault(field, default)

    order = []
    for row in _rows(d / SUMMARY_FILE):
        key = (row["grouping"], row["group"])
        order.append(key)
        keyed[key] = {"summary": row}
    for row in _rows(d / "fig_protocols.csv"):
        bucket(row, "protocol", {})[row["version"]] = _float(row["share"])
    for row in _rows(d / "fig_cipher_dist.csv"):
        bucket(row, "cipher", {})[row["kind"]] = _dist_parse(row)
    for row in _rows(d / "fig_chain_issues.csv"):
        bucket(row, "chain", {})[row["code"]] = _float(row["share"])
    for row in _rows(d / "fig_vuln_dist.csv"):
        keyed[(row["grouping"], row["group"])]["vuln"] = _dist_parse(row)
    for row in _rows(d / "table_top_cves.csv"):
        bucket(row, "top", []).append(CveRow(row["id"], row["severity"],
                                             int(row["domains_exposed"])))
    for row in _rows(d / GRADES_FILE):
        bucket(row, "grades", {})[row["letter"]] = _float(row["share"])

    result: dict[str, AggregateStats] = {}
    for key in order:
        parts = keyed[key]
        s = parts["summary"]
        g = GroupStats(
            n=int(s["n"]), unreachable=int(s["unreachable"]), n_tls=int(s["n_tls"]),
            n_cert=int(s["n_cert"]), n_vuln=int(s["n_vuln"]), n_graded=int(s["n_graded"]),
            protocol_support_share=parts.get("protocol", {}),
            share_with_weak=_float(s["share_with_weak"]),
            share_with_insecure=_float(s["share_with_insecure"]),
            weak_count_distribution=parts.get("cipher", {}).get("weak"),
            insecure_count_distribution=parts.get("cipher", {}).get("insecure"),
            chain_issue_share=_float(s["chain_issue_share"]),
            chain_issue_share_by_code=parts.get("chain", {}),
            share_untrusted=_float(s["share_untrusted"]),
            share_exposed=_float(s["share_exposed"]),
            vuln_count_distribution=parts.get("vuln"),
            grade_share=parts.get("grades", {}),
            top_cves=tuple(parts.get("top", ())),
        )
        grouping = Grouping(key[0])
        if grouping.value not in result:
            result[grouping.value] = AggregateStats(grouping, {}, int(s["top_n"]))
        result[grouping.value].groups[key[1]] = g
    return list(result.values())


def load_reports(path):
    from .report import DomainPostureReport
    path = Path(path)
    if path.is_dir():
        path = path / REPORTS_FILE
    latest = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = DomainPostureReport.from_dict(json.loads(line))
                latest[r.domain] = r
    return list(latest.values())
